#include <CLI11.hpp>
#include <iostream>

#include "gridpose/commands.hpp"

using namespace gridpose;

int main(int argc, char** argv) {
    CLI::App app{"gridpose: 2D-to-3D human pose lifting on weave-like grid representations"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic pose dataset");
    gen_cmd->add_option("--n", gen.n, "number of samples");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_option("--topology", gen.topology, "skeleton CSV (default: built-in 17-joint skeleton)");
    gen_cmd->add_option("--camera", gen.camera, "camera CSV whose first row supplies the intrinsics");
    gen_cmd->add_option("--out", gen.out_dir, "output directory");

    std::string train_config_path, train_out;
    uint64_t train_seed = 0;
    bool train_seed_set = false;
    auto* train_cmd = app.add_subcommand("train", "Train a grid lifting network");
    train_cmd->add_option("--config", train_config_path, "run configuration JSON")->required();
    train_cmd->add_option("--out", train_out, "output directory (overrides config out_dir)");
    train_cmd->add_option("--seed", train_seed, "seed override")->each([&](const std::string&) {
        train_seed_set = true;
    });

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--data", eval.data, "pose CSV")->required();
    eval_cmd->add_option("--cameras", eval.cameras, "camera sidecar CSV (default: sibling cameras.csv)");
    eval_cmd->add_option("--protocol", eval.protocol, "p1 | p1star | p2")
        ->check(CLI::IsMember({"p1", "p1star", "p2"}));
    eval_cmd->add_flag("--uvz", eval.uvz, "apply the perspective uvz projection before metrics");
    eval_cmd->add_option("--out", eval.out_dir, "optional output directory for metrics.json");
    uint64_t eval_seed = 0;
    eval_cmd->add_option("--seed", eval_seed, "accepted for interface uniformity (evaluation is deterministic)");

    LayoutArgs layout;
    auto* layout_cmd = app.add_subcommand("layout", "Layout tooling");
    layout_cmd->require_subcommand(1);
    for (const char* sub : {"make-handcrafted", "make-random", "shuffle", "validate", "dump"}) {
        auto* c = layout_cmd->add_subcommand(sub);
        c->add_option("--topology", layout.topology, "skeleton CSV (default built-in)");
        c->add_option("--layout", layout.layout, "layout CSV input");
        c->add_option("--checkpoint", layout.checkpoint, "checkpoint input (dump)");
        c->add_option("--mode", layout.mode, "row | column | global (shuffle)");
        c->add_option("--rows", layout.grid_rows, "grid rows");
        c->add_option("--cols", layout.grid_cols, "grid columns");
        c->add_option("--seed", layout.seed, "seed");
        c->add_option("--out", layout.out, "output path");
    }

    std::string verify_suite = "all";
    auto* verify_cmd = app.add_subcommand("verify", "Run the built-in verification suites");
    verify_cmd->add_option("--suite", verify_suite, "gradcheck | oracle | roundtrip | all");

    std::string params_config_path;
    auto* params_cmd = app.add_subcommand("params", "Print the parameter-count breakdown");
    params_cmd->add_option("--config", params_config_path, "run configuration JSON (default: defaults)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) {
            RunConfig config = load_run_config(train_config_path);
            if (!train_out.empty()) config.out_dir = train_out;
            if (train_seed_set) config.gln.seed = train_seed;
            return cmd_train(config);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval);
        if (layout_cmd->parsed()) {
            layout.subcommand = layout_cmd->get_subcommands().front()->get_name();
            return cmd_layout(layout);
        }
        if (verify_cmd->parsed()) return cmd_verify(verify_suite);
        if (params_cmd->parsed()) {
            RunConfig config;
            if (!params_config_path.empty()) config = load_run_config(params_config_path);
            return cmd_params(config);
        }
    } catch (const NumericAbort& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
