#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "gridpose/commands.hpp"
#include "gridpose/csv.hpp"

using namespace gridpose;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunConfig smoke_config(const std::string& dataset, const std::string& out_dir) {
    RunConfig c = run_config_from_json_text(R"({
        "latent_channels": 16, "blocks": 1, "kernel_plan": "3-33-3",
        "batch_size": 40, "epochs": 2, "seed": 5
    })");
    c.dataset = dataset;
    c.out_dir = out_dir;
    return c;
}

}  // namespace

TEST_CASE("run config parsing: defaults, unknown keys, validation") {
    const RunConfig c = run_config_from_json_text("{}");
    CHECK(c.gln.latent_channels == 256);
    CHECK(c.gln.blocks == 2);
    CHECK(c.gln.kernel_plan == "3-33-33-3");
    CHECK(c.hyper.batch_size == 200);
    CHECK(c.hyper.epochs == 100);
    CHECK(c.hyper.base_lr == 1e-3);
    CHECK(c.hyper.gumbel_cutoff == 30);

    CHECK_THROWS_AS(run_config_from_json_text(R"({"latent": 4})"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"kernel_plan": "3-33-3"})"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"batch_size": 1})"), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json_text("not json"), std::invalid_argument);

    // Round trip through the resolved-config writer.
    const RunConfig back = run_config_from_json_text(run_config_to_json_text(c));
    CHECK(back.gln.latent_channels == c.gln.latent_channels);
    CHECK(back.hyper.epochs == c.hyper.epochs);
}

TEST_CASE("gen-data is deterministic and validates flags") {
    const std::string dir_a = tmp_dir("gridpose_cli_gen_a");
    const std::string dir_b = tmp_dir("gridpose_cli_gen_b");
    GenDataArgs args;
    args.n = 100;
    args.seed = 7;
    args.out_dir = dir_a;
    CHECK(cmd_gen_data(args) == kExitOk);
    args.out_dir = dir_b;
    CHECK(cmd_gen_data(args) == kExitOk);
    CHECK(slurp(dir_a + "/poses.csv") == slurp(dir_b + "/poses.csv"));
    CHECK(slurp(dir_a + "/cameras.csv") == slurp(dir_b + "/cameras.csv"));
    CHECK(fs::exists(dir_a + "/gen_config.json"));

    GenDataArgs bad = args;
    bad.n = 0;
    CHECK(cmd_gen_data(bad) == kExitUsage);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("train twice yields byte-identical history, checkpoint and config") {
    const std::string data_dir = tmp_dir("gridpose_cli_data");
    GenDataArgs gen;
    gen.n = 80;
    gen.seed = 3;
    gen.out_dir = data_dir;
    REQUIRE(cmd_gen_data(gen) == kExitOk);

    const std::string run_a = tmp_dir("gridpose_cli_run_a");
    const std::string run_b = tmp_dir("gridpose_cli_run_b");
    REQUIRE(cmd_train(smoke_config(data_dir + "/poses.csv", run_a)) == kExitOk);
    REQUIRE(cmd_train(smoke_config(data_dir + "/poses.csv", run_b)) == kExitOk);
    CHECK(slurp(run_a + "/history.csv") == slurp(run_b + "/history.csv"));
    CHECK(slurp(run_a + "/model.ckpt") == slurp(run_b + "/model.ckpt"));
    // Resolved configs match except for the differing out_dir lines.
    const auto ja = nlohmann::json::parse(slurp(run_a + "/config.json"));
    const auto jb = nlohmann::json::parse(slurp(run_b + "/config.json"));
    for (auto it = ja.begin(); it != ja.end(); ++it)
        if (it.key() != "out_dir") CHECK(jb.at(it.key()) == it.value());

    // History carries the schedule: epoch 0 at 0.001, epoch 1 at 0.00096.
    std::ifstream hist(run_a + "/history.csv");
    std::string line;
    std::getline(hist, line);
    CHECK(line == "epoch,lr,loss,train_mpjpe,sgt_coverage,gumbel_noise");
    std::getline(hist, line);
    auto fields = csv::split(line);
    CHECK(csv::parse_double(fields[1], "lr") == 1e-3);
    std::getline(hist, line);
    fields = csv::split(line);
    CHECK(std::abs(csv::parse_double(fields[1], "lr") - 0.00096) <= 1e-12);

    SUBCASE("eval on the training data matches the final history row") {
        std::ifstream h(run_a + "/history.csv");
        std::string last, row;
        std::getline(h, row);  // header
        while (std::getline(h, row))
            if (!row.empty()) last = row;
        const double final_mpjpe = csv::parse_double(csv::split(last)[3], "train_mpjpe");

        EvalArgs eval;
        eval.checkpoint = run_a + "/model.ckpt";
        eval.data = data_dir + "/poses.csv";
        std::string json_text;
        REQUIRE(cmd_eval(eval, &json_text) == kExitOk);
        const auto j = nlohmann::json::parse(json_text);
        for (const char* key : {"mpjpe_mm", "pa_mpjpe_mm", "pck_percent", "auc_percent", "per_joint"})
            CHECK(j.contains(key));
        CHECK(std::abs(j["mpjpe_mm"].get<double>() - final_mpjpe) <= 1e-9);
        CHECK(j["pa_mpjpe_mm"].get<double>() <= j["mpjpe_mm"].get<double>() + 1e-9);
    }

    SUBCASE("eval rejects a dataset with mismatched joints") {
        const std::string bad_dir = tmp_dir("gridpose_cli_badtopo");
        {
            std::ofstream out(bad_dir + "/poses.csv");
            out << "sample_id,joint_name,u,v,x,y,z\n";
            out << "0,alpha,1,2,3,4,5\n0,beta,1,2,3,4,5\n";
        }
        EvalArgs eval;
        eval.checkpoint = run_a + "/model.ckpt";
        eval.data = bad_dir + "/poses.csv";
        CHECK(cmd_eval(eval) == kExitIncompatible);
        fs::remove_all(bad_dir);
    }

    fs::remove_all(data_dir);
    fs::remove_all(run_a);
    fs::remove_all(run_b);
}

TEST_CASE("layout subcommands: make, shuffle, validate, dump") {
    const std::string dir = tmp_dir("gridpose_cli_layout");

    LayoutArgs make;
    make.subcommand = "make-handcrafted";
    make.out = dir + "/handcrafted.csv";
    CHECK(cmd_layout(make) == kExitOk);

    LayoutArgs validate;
    validate.subcommand = "validate";
    validate.layout = make.out;
    CHECK(cmd_layout(validate) == kExitOk);

    LayoutArgs rnd;
    rnd.subcommand = "make-random";
    rnd.seed = 11;
    rnd.out = dir + "/random.csv";
    CHECK(cmd_layout(rnd) == kExitOk);

    LayoutArgs shuffle;
    shuffle.subcommand = "shuffle";
    shuffle.layout = make.out;
    shuffle.mode = "global";
    shuffle.seed = 4;
    shuffle.out = dir + "/shuffled_a.csv";
    CHECK(cmd_layout(shuffle) == kExitOk);
    shuffle.out = dir + "/shuffled_b.csv";
    CHECK(cmd_layout(shuffle) == kExitOk);
    CHECK(slurp(dir + "/shuffled_a.csv") == slurp(dir + "/shuffled_b.csv"));

    // A layout breaking the adjacency constraint exits with the
    // constraint-violation code.
    {
        std::ofstream out(dir + "/bad.csv");
        out << "row,col,joint_name\n";
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c) {
                const char* name = (r == 0 && c == 0) ? "head" : "torso";
                out << r << "," << c << "," << name << "\n";
            }
    }
    LayoutArgs bad;
    bad.subcommand = "validate";
    bad.layout = dir + "/bad.csv";
    CHECK(cmd_layout(bad) == kExitConstraint);

    LayoutArgs dump;
    dump.subcommand = "dump";
    dump.layout = make.out;
    dump.out = dir + "/dump";
    CHECK(cmd_layout(dump) == kExitOk);
    CHECK(fs::exists(dir + "/dump/assignment.csv"));

    fs::remove_all(dir);
}

TEST_CASE("uvz normalization trains and evaluates through the perspective projection") {
    const std::string data_dir = tmp_dir("gridpose_cli_uvz_data");
    GenDataArgs gen;
    gen.n = 60;
    gen.seed = 21;
    gen.out_dir = data_dir;
    REQUIRE(cmd_gen_data(gen) == kExitOk);

    const std::string run = tmp_dir("gridpose_cli_uvz_run");
    RunConfig cfg = run_config_from_json_text(R"({
        "latent_channels": 8, "blocks": 1, "kernel_plan": "3-33-3",
        "batch_size": 20, "epochs": 2, "seed": 6, "normalization": "uvz"
    })");
    cfg.dataset = data_dir + "/poses.csv";
    cfg.out_dir = run;
    REQUIRE(cmd_train(cfg) == kExitOk);

    EvalArgs eval;
    eval.checkpoint = run + "/model.ckpt";
    eval.data = data_dir + "/poses.csv";
    eval.uvz = true;
    std::string json_text;
    REQUIRE(cmd_eval(eval, &json_text) == kExitOk);
    const auto j = nlohmann::json::parse(json_text);
    CHECK(j["mpjpe_mm"].get<double>() > 0.0);
    fs::remove_all(data_dir);
    fs::remove_all(run);
}

TEST_CASE("verify roundtrip suite reports success") { CHECK(cmd_verify("roundtrip") == kExitOk); }

TEST_CASE("params subcommand runs on the default config") {
    RunConfig c = run_config_from_json_text(R"({"latent_channels": 16, "blocks": 1, "kernel_plan": "3-33-3"})");
    CHECK(cmd_params(c) == kExitOk);
}
