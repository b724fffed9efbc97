#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridpose/data.hpp"
#include "gridpose/gridconv.hpp"
#include "gridpose/sgt.hpp"

namespace gridpose {

enum class SgtMode { Handcrafted, Learnable, Random, File };
SgtMode sgt_mode_from_string(const std::string& s);
const char* to_string(SgtMode m);

struct GLNConfig {
    int latent_channels = 256;
    int blocks = 2;
    std::string kernel_plan = "3-33-33-3";  // (a-bc-bc-d) form, one group per layer stage
    double dropout_p = 0.25;
    bool dynamic = true;
    GridSpec grid{5, 5};
    SgtMode sgt_mode = SgtMode::Handcrafted;
    NormMode normalization = NormMode::Standard;
    uint64_t seed = 0;
    std::string layout_file;          // SgtMode::File
    std::string pad_modes_a = "circular";   // per-branch "mode" or "rows:cols"
    std::string pad_modes_b = "replicate";

    /// Per-layer kernel sizes: expand, 2 per residual block, shrink.
    /// Throws when the plan does not match the block count or an entry is
    /// even.
    std::vector<int> layer_kernels() const;
};

std::pair<PadMode, PadMode> parse_pad_modes(const std::string& s);

/// D-GridConv layer followed by batch normalization, ReLU and dropout (the
/// standard layer recipe; the shrink layer uses the bare convolution
/// instead).
struct LayerBlock {
    DGridConvLayer conv;
    Parameter bn_gamma, bn_beta;
    Tensor bn_run_mean, bn_run_var;

    struct Tape {
        Tensor input;
        DGridConvLayer::Cache conv;
        BatchNormCache bn;
        Tensor relu_out;
        DropoutResult drop;
    };

    Tensor forward(const Tensor& x, Mode mode, double dropout_p, Rng* rng, Tape* tape);
    Tensor backward(const Tensor& grad_out, Tape& tape, double dropout_p);
    std::vector<Parameter*> parameters();
};

struct ResidualBlock {
    LayerBlock first, second;
};

struct GLNTape {
    Tensor input;             // N x J x 2
    AssignmentMatrix s_used;  // effective (coverage-patched) assignment
    Tensor sampled_soft;      // learnable mode: S_soft of the draw
    std::vector<LayerBlock::Tape> layer_tapes;
    Tensor shrink_input;
    DGridConvLayer::Cache shrink_cache;
    Tensor d_out;   // N x H x P x 3
    Tensor output;  // N x J x 3
};

struct GLNModel {
    GLNConfig config;
    SkeletonTopology topology;
    LayerBlock expand;
    std::vector<ResidualBlock> blocks;
    DGridConvLayer shrink;

    AssignmentMatrix assignment;             // fixed layout, or latest argmax in learnable mode
    std::optional<AutoGridsState> autogrids;
    AssignmentMatrix last_covering;          // fallback rows for uncovered joints
    int64_t coverage_fallback_events = 0;

    /// Forward pass of the full pipeline. Train mode in learnable SGT mode
    /// resamples the assignment (Gumbel noise from rng while the epoch is
    /// below the cutoff); eval mode is deterministic. Rejects non-finite
    /// inputs.
    Tensor forward(const Tensor& g2d, Mode mode, Rng* rng, int epoch, GLNTape* tape = nullptr);

    /// Backward from the loss gradient w.r.t. the output; accumulates all
    /// parameter gradients (including S_prob through the straight-through
    /// estimator in learnable mode).
    void backward(const Tensor& grad_output, GLNTape& tape);

    std::vector<Parameter*> parameters();
    int64_t parameter_count() const;
    int64_t attention_parameter_count() const;
    int sgt_coverage() const;  // joints covered by the current assignment

private:
    AssignmentMatrix effective_assignment(AssignmentMatrix sampled, bool update_state = true);
};

GLNModel build_gln(const GLNConfig& config, const SkeletonTopology& topo);

/// Mean over batch and joints of the squared Euclidean distance between
/// predicted and ground-truth joint positions.
double gln_loss(const Tensor& pred, const Tensor& gt);
Tensor gln_loss_grad(const Tensor& pred, const Tensor& gt);

struct TrainHyper {
    int batch_size = 200;
    int epochs = 100;
    double base_lr = 1e-3;
    int gumbel_cutoff = 30;  // applied to the model's AutoGrids state
};

struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double loss = 0;          // mean training-batch loss
    double train_mpjpe = 0;   // eval-mode MPJPE over the training set, mm
    int sgt_coverage = 0;
    bool gumbel_noise = false;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int64_t coverage_fallbacks = 0;
};

struct NumericAbort : std::runtime_error {
    int epoch, batch_index;
    NumericAbort(int e, int b, const std::string& msg) : std::runtime_error(msg), epoch(e), batch_index(b) {}
};

/// Runs the full training loop: shuffled mini-batches, Adam on every
/// parameter, per-mode learning-rate schedule (x0.96 per epoch, or x0.1
/// every 10 epochs in learnable mode). Throws NumericAbort with the
/// offending batch index when the loss goes non-finite.
TrainHistory train(GLNModel& model, const Dataset& data, const TrainHyper& hyper, Rng& rng);

/// Learning rate in effect at a given epoch under the model's schedule.
double lr_at_epoch(SgtMode mode, double base_lr, int epoch);

/// Eval-mode predictions over a dataset, converted to root-relative
/// millimeters.
Tensor predict_mm(GLNModel& model, const Dataset& data, int batch_size = 256);
double eval_mpjpe_mm(GLNModel& model, const Dataset& data, int batch_size = 256);

/// Binary checkpoint holding config, topology, every parameter array with
/// its Adam state, BN running statistics and the assignment state. The
/// round trip is bit-exact.
void save_model(const GLNModel& model, const std::string& path);
GLNModel load_model(const std::string& path);

}  // namespace gridpose
