#include "gridpose/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "gridpose/config_io.hpp"
#include "gridpose/csv.hpp"
#include "gridpose/metrics.hpp"
#include "gridpose/selfcheck.hpp"

namespace fs = std::filesystem;

namespace gridpose {

namespace {

const std::set<std::string> kRunConfigKeys = {
    "latent_channels", "blocks",   "kernel_plan", "dropout_p",   "dynamic",     "grid_rows",
    "grid_cols",       "sgt_mode", "normalization", "seed",      "layout_file", "pad_modes_a",
    "pad_modes_b",     "batch_size", "epochs",    "base_lr",     "gumbel_cutoff", "dataset",
    "cameras",         "topology", "out_dir"};

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string sibling_path(const std::string& reference, const std::string& name) {
    fs::path p(reference);
    return (p.parent_path() / name).string();
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write history: " + path);
    out << "epoch,lr,loss,train_mpjpe,sgt_coverage,gumbel_noise\n";
    for (const auto& e : history.epochs)
        out << e.epoch << "," << csv::fmt(e.lr) << "," << csv::fmt(e.loss) << "," << csv::fmt(e.train_mpjpe)
            << "," << e.sgt_coverage << "," << (e.gumbel_noise ? 1 : 0) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

/// Joint names of the first sample in a pose CSV, for compatibility checks
/// before a full load.
std::vector<std::string> peek_joint_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<std::string> names;
    std::string line;
    bool header_seen = false;
    std::string first_id;
    while (std::getline(in, line)) {
        csv::strip_eol(line);
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        auto fields = csv::split(line);
        if (fields.size() < 2) break;
        if (first_id.empty()) first_id = fields[0];
        if (fields[0] != first_id) break;
        names.push_back(fields[1]);
    }
    return names;
}

nlohmann::json metric_report_to_json(const MetricReport& r) {
    return nlohmann::json{{"mpjpe_mm", r.mpjpe_mm},
                          {"pa_mpjpe_mm", r.pa_mpjpe_mm},
                          {"pck_percent", r.pck_percent},
                          {"auc_percent", r.auc_percent},
                          {"per_joint", r.per_joint_mpjpe},
                          {"degenerate_samples", r.degenerate_samples}};
}

CameraModel load_camera_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open camera file: " + path);
    std::string line;
    bool header_seen = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        csv::strip_eol(line);
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto fields = csv::split(line);
        const std::string ctx = path + ":" + std::to_string(line_no);
        if (fields.size() != 8) throw std::runtime_error(ctx + ": expected 8 columns");
        CameraModel c;
        c.fx = csv::parse_double(fields[1], ctx);
        c.fy = csv::parse_double(fields[2], ctx);
        c.cx = csv::parse_double(fields[3], ctx);
        c.cy = csv::parse_double(fields[4], ctx);
        c.image_w = csv::parse_double(fields[5], ctx);
        c.image_h = csv::parse_double(fields[6], ctx);
        c.root_depth = csv::parse_double(fields[7], ctx);
        return c;
    }
    throw std::runtime_error(path + ": no camera row found");
}

}  // namespace

std::string RunConfig::resolved_cameras() const {
    if (!cameras.empty()) return cameras;
    return sibling_path(dataset, "cameras.csv");
}

RunConfig run_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kRunConfigKeys.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");

    RunConfig c;
    c.gln = gln_config_from_json(j);
    c.hyper.batch_size = j.value("batch_size", c.hyper.batch_size);
    c.hyper.epochs = j.value("epochs", c.hyper.epochs);
    c.hyper.base_lr = j.value("base_lr", c.hyper.base_lr);
    c.hyper.gumbel_cutoff = j.value("gumbel_cutoff", c.hyper.gumbel_cutoff);
    c.dataset = j.value("dataset", c.dataset);
    c.cameras = j.value("cameras", c.cameras);
    c.topology = j.value("topology", c.topology);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (c.hyper.batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
    if (c.hyper.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (c.hyper.base_lr <= 0) throw std::invalid_argument("config: base_lr must be positive");
    c.gln.layer_kernels();            // validates the kernel plan
    parse_pad_modes(c.gln.pad_modes_a);
    parse_pad_modes(c.gln.pad_modes_b);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return run_config_from_json_text(text);
}

std::string run_config_to_json_text(const RunConfig& config) {
    nlohmann::json j = gln_config_to_json(config.gln);
    j["batch_size"] = config.hyper.batch_size;
    j["epochs"] = config.hyper.epochs;
    j["base_lr"] = config.hyper.base_lr;
    j["gumbel_cutoff"] = config.hyper.gumbel_cutoff;
    j["dataset"] = config.dataset;
    j["cameras"] = config.cameras;
    j["topology"] = config.topology;
    j["out_dir"] = config.out_dir;
    return j.dump(2) + "\n";
}

SkeletonTopology resolve_topology(const std::string& topology_path) {
    if (topology_path.empty()) return canonical_h36m17();
    return load_skeleton_csv(topology_path);
}

int cmd_gen_data(const GenDataArgs& args) {
    if (args.n < 1) {
        std::cerr << "gen-data: --n must be >= 1\n";
        return kExitUsage;
    }
    if (args.out_dir.empty()) {
        std::cerr << "gen-data: --out is required\n";
        return kExitUsage;
    }
    const SkeletonTopology topo = resolve_topology(args.topology);
    const CameraModel cam = args.camera.empty() ? CameraModel{} : load_camera_spec(args.camera);
    const Dataset data = synth_generate(args.n, topo, cam, args.seed);
    fs::create_directories(args.out_dir);
    const fs::path dir(args.out_dir);
    save_dataset_csv(data, (dir / "poses.csv").string(), (dir / "cameras.csv").string());

    nlohmann::json resolved{{"n", args.n},
                            {"seed", args.seed},
                            {"topology", args.topology},
                            {"camera", args.camera},
                            {"out", args.out_dir},
                            {"camera_defaults",
                             {{"fx", cam.fx},
                              {"fy", cam.fy},
                              {"cx", cam.cx},
                              {"cy", cam.cy},
                              {"image_w", cam.image_w},
                              {"image_h", cam.image_h},
                              {"root_depth", cam.root_depth}}}};
    write_text_file((dir / "gen_config.json").string(), resolved.dump(2) + "\n");
    return kExitOk;
}

int cmd_train(const RunConfig& config) {
    if (config.dataset.empty() || config.out_dir.empty()) {
        std::cerr << "train: config must set dataset and out_dir\n";
        return kExitUsage;
    }
    const SkeletonTopology topo = resolve_topology(config.topology);
    const Dataset data = load_dataset_csv(config.dataset, config.resolved_cameras(), topo);
    GLNModel model = build_gln(config.gln, topo);
    Rng rng(config.gln.seed);

    fs::create_directories(config.out_dir);
    const fs::path dir(config.out_dir);
    TrainHistory history;
    try {
        history = train(model, data, config.hyper, rng);
    } catch (const NumericAbort& abort) {
        std::cerr << "train: aborted: " << abort.what() << "\n";
        return kExitNumeric;
    }
    write_history_csv(history, (dir / "history.csv").string());
    save_model(model, (dir / "model.ckpt").string());
    write_text_file((dir / "config.json").string(), run_config_to_json_text(config));
    std::cout << "trained " << config.hyper.epochs << " epochs; final train MPJPE "
              << csv::fmt(history.epochs.back().train_mpjpe) << " mm\n";
    return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::string* json_out) {
    GLNModel model = load_model(args.checkpoint);

    const auto names = peek_joint_names(args.data);
    if (names != model.topology.joint_names) {
        std::cerr << "eval: dataset joints do not match the checkpoint topology\n";
        return kExitIncompatible;
    }
    const std::string cameras =
        args.cameras.empty() ? sibling_path(args.data, "cameras.csv") : args.cameras;
    const Dataset data = load_dataset_csv(args.data, cameras, model.topology);

    if (args.uvz) model.config.normalization = NormMode::Uvz;
    const Tensor preds = predict_mm(model, data);
    const int n = data.size(), joints = model.topology.joint_count();
    Tensor gt({n, joints, 3});
    for (int i = 0; i < n; ++i)
        std::copy(data.samples[static_cast<size_t>(i)].pose3d.v.begin(),
                  data.samples[static_cast<size_t>(i)].pose3d.v.end(),
                  gt.v.begin() + static_cast<long>(i) * joints * 3);

    const MetricReport report = evaluate_metrics(preds, gt);
    nlohmann::json j = metric_report_to_json(report);
    j["protocol"] = args.protocol;
    j["n_samples"] = n;
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (json_out) *json_out = text;

    if (!args.out_dir.empty()) {
        fs::create_directories(args.out_dir);
        const fs::path dir(args.out_dir);
        write_text_file((dir / "metrics.json").string(), text);
        nlohmann::json resolved{{"checkpoint", args.checkpoint}, {"data", args.data},
                                {"cameras", cameras},           {"protocol", args.protocol},
                                {"uvz", args.uvz},              {"out", args.out_dir}};
        write_text_file((dir / "eval_config.json").string(), resolved.dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_layout(const LayoutArgs& args) {
    const auto write_run_json = [&](const std::string& primary_out) {
        nlohmann::json resolved{{"subcommand", args.subcommand}, {"topology", args.topology},
                                {"layout", args.layout},         {"mode", args.mode},
                                {"grid_rows", args.grid_rows},   {"grid_cols", args.grid_cols},
                                {"seed", args.seed},             {"out", args.out}};
        write_text_file(primary_out + ".run.json", resolved.dump(2) + "\n");
    };

    const SkeletonTopology topo = resolve_topology(args.topology);
    if (args.subcommand == "make-handcrafted") {
        if (args.out.empty()) {
            std::cerr << "layout make-handcrafted: --out required\n";
            return kExitUsage;
        }
        const AssignmentMatrix s = build_handcrafted_layout(topo, GridSpec{args.grid_rows, args.grid_cols});
        save_layout_csv(s, topo, args.out);
        write_run_json(args.out);
        return kExitOk;
    }
    if (args.subcommand == "make-random") {
        if (args.out.empty()) {
            std::cerr << "layout make-random: --out required\n";
            return kExitUsage;
        }
        Rng rng(args.seed);
        const AssignmentMatrix s = random_sgt(topo, GridSpec{args.grid_rows, args.grid_cols}, rng);
        save_layout_csv(s, topo, args.out);
        write_run_json(args.out);
        return kExitOk;
    }
    if (args.subcommand == "shuffle") {
        if (args.layout.empty() || args.out.empty()) {
            std::cerr << "layout shuffle: --layout and --out required\n";
            return kExitUsage;
        }
        const AssignmentMatrix s = load_layout_csv(args.layout, topo);
        Rng rng(args.seed);
        const AssignmentMatrix shuffled = shuffle_layout(s, shuffle_mode_from_string(args.mode), rng);
        save_layout_csv(shuffled, topo, args.out);
        write_run_json(args.out);
        return kExitOk;
    }
    if (args.subcommand == "validate") {
        if (args.layout.empty()) {
            std::cerr << "layout validate: --layout required\n";
            return kExitUsage;
        }
        const AssignmentMatrix s = load_layout_csv(args.layout, topo);
        const ConstraintReport report = validate_constraints(s, topo);
        std::cout << "eq2 (edges adjacent): " << (report.eq2_ok ? "ok" : "VIOLATED") << "\n";
        std::cout << "eq3 (one-hot rows):   " << (report.eq3_ok ? "ok" : "VIOLATED") << "\n";
        for (const auto& v : report.violations) std::cout << "  " << v << "\n";
        return report.ok() ? kExitOk : kExitConstraint;
    }
    if (args.subcommand == "dump") {
        if (args.out.empty()) {
            std::cerr << "layout dump: --out required\n";
            return kExitUsage;
        }
        fs::create_directories(args.out);
        const fs::path dir(args.out);
        if (!args.checkpoint.empty()) {
            const GLNModel model = load_model(args.checkpoint);
            if (!model.autogrids) {
                std::cerr << "layout dump: checkpoint has no learnable assignment state\n";
                return kExitIncompatible;
            }
            dump_autogrids_csv(*model.autogrids, model.topology, (dir / "s_prob.csv").string(),
                               (dir / "s_prob_log.csv").string());
            save_layout_csv(model.assignment, model.topology, (dir / "assignment.csv").string());
            write_run_json((dir / "s_prob.csv").string());
            return kExitOk;
        }
        if (args.layout.empty()) {
            std::cerr << "layout dump: --layout or --checkpoint required\n";
            return kExitUsage;
        }
        const AssignmentMatrix s = load_layout_csv(args.layout, topo);
        save_layout_csv(s, topo, (dir / "assignment.csv").string());
        write_run_json((dir / "assignment.csv").string());
        return kExitOk;
    }
    std::cerr << "layout: unknown subcommand '" << args.subcommand << "'\n";
    return kExitUsage;
}

int cmd_verify(const std::string& suite) {
    std::vector<selfcheck::Check> checks;
    try {
        checks = selfcheck::run_suite(suite);
    } catch (const std::invalid_argument& e) {
        std::cerr << "verify: " << e.what() << "\n";
        return kExitUsage;
    }
    size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    bool all_ok = true;
    std::string first_fail;
    for (const auto& c : checks) {
        std::cout << (c.ok ? "[PASS] " : "[FAIL] ") << c.name;
        for (size_t i = c.name.size(); i < width + 2; ++i) std::cout << ' ';
        std::cout << c.detail << "\n";
        if (!c.ok && first_fail.empty()) first_fail = c.name;
        all_ok = all_ok && c.ok;
    }
    if (!all_ok) {
        std::cerr << "verify: first failing check: " << first_fail << "\n";
        return kExitVerifyFailed;
    }
    std::cout << checks.size() << " checks passed\n";
    return kExitOk;
}

int cmd_params(const RunConfig& config) {
    const SkeletonTopology topo = resolve_topology(config.topology);
    GLNModel model = build_gln(config.gln, topo);
    const int64_t total = model.parameter_count();
    const int64_t attention = model.attention_parameter_count();
    int64_t bn = 0;
    auto count_block = [&](LayerBlock& b) { bn += b.bn_gamma.numel() + b.bn_beta.numel(); };
    count_block(model.expand);
    for (auto& b : model.blocks) {
        count_block(b.first);
        count_block(b.second);
    }
    const int64_t autogrids = model.autogrids ? model.autogrids->s_prob.numel() : 0;
    nlohmann::json j{{"total", total},
                     {"attention", attention},
                     {"batch_norm", bn},
                     {"autogrids", autogrids},
                     {"convolution", total - attention - bn - autogrids}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

}  // namespace gridpose
