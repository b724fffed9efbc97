#pragma once

#include <optional>
#include <string>

#include "gridpose/gln.hpp"

namespace gridpose {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIncompatible = 4;
inline constexpr int kExitConstraint = 5;

/// Fully resolved run configuration: model config, training hyperparameters
/// and dataset/output paths, serialized as one JSON document. Unknown keys
/// are rejected.
struct RunConfig {
    GLNConfig gln;
    TrainHyper hyper;
    std::string dataset;   // pose CSV
    std::string cameras;   // camera sidecar CSV ("" derives <dataset stem>.cameras.csv)
    std::string topology;  // skeleton CSV ("" uses the built-in 17-joint skeleton)
    std::string out_dir;

    std::string resolved_cameras() const;
};

RunConfig run_config_from_json_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json_text(const RunConfig& config);

SkeletonTopology resolve_topology(const std::string& topology_path);

struct GenDataArgs {
    int n = 0;
    uint64_t seed = 0;
    std::string topology;  // optional skeleton CSV
    std::string camera;    // optional camera CSV (first row used)
    std::string out_dir;
};

int cmd_gen_data(const GenDataArgs& args);
int cmd_train(const RunConfig& config);

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string cameras;  // "" derives the sidecar path
    std::string protocol = "p1";
    bool uvz = false;
    std::string out_dir;  // optional
};
int cmd_eval(const EvalArgs& args, std::string* json_out = nullptr);

struct LayoutArgs {
    std::string subcommand;  // make-handcrafted | make-random | shuffle | validate | dump
    std::string topology;
    std::string layout;
    std::string checkpoint;
    std::string mode = "global";
    int grid_rows = 5, grid_cols = 5;
    uint64_t seed = 0;
    std::string out;
};
int cmd_layout(const LayoutArgs& args);

/// Runs the named self-check suite (gradcheck | oracle | roundtrip | all)
/// and prints a per-check table. Returns kExitOk when every check passes.
int cmd_verify(const std::string& suite);

/// Prints the parameter-count breakdown for a model config as JSON.
int cmd_params(const RunConfig& config);

}  // namespace gridpose
