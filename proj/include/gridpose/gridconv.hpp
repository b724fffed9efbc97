#pragma once

#include <optional>

#include "gridpose/ops.hpp"
#include "gridpose/optim.hpp"

namespace gridpose {

/// One convolution branch: kernel, bias and the padding mode pair
/// (rows axis, cols axis). Pad size is fixed at (K-1)/2 so the spatial size
/// is preserved.
struct BranchParams {
    Parameter kernel;  // K x K x Cin x Cout
    Parameter bias;    // Cout
    PadMode rows_mode = PadMode::Circular;
    PadMode cols_mode = PadMode::Circular;
};

/// SE-style attention head: pooled channel descriptor -> batch norm -> ReLU
/// -> C->16 -> ReLU -> 16->H*P*K*K -> sigmoid, reshaped to per-cell K x K
/// kernel scalings in (0,1). One head per layer; both branches share its
/// output.
struct AttentionHead {
    Parameter bn_gamma, bn_beta;
    Tensor run_mean, run_var;
    Parameter fc1_w, fc1_b;  // C -> 16
    Parameter fc2_w, fc2_b;  // 16 -> H*P*K*K

    static constexpr int kHidden = 16;
};

struct LayerShape {
    int kernel = 3;
    int cin = 0;
    int cout = 0;
    int rows = 5;
    int cols = 5;
    bool dynamic = true;
    int pad() const { return (kernel - 1) / 2; }
};

/// Two-branch grid convolution (circular-padded + replicate-padded branches,
/// summed), optionally with the attention head scaling each branch's kernel
/// per grid cell.
struct DGridConvLayer {
    LayerShape shape;
    BranchParams branch_a;  // circular padding by default
    BranchParams branch_b;  // replicate padding by default
    std::optional<AttentionHead> attention;

    struct SampleCache {
        Tensor padded_a, padded_b;
        Tensor alpha;  // H x P x K x K, empty when not dynamic
    };
    struct Cache {
        std::vector<SampleCache> samples;
        Tensor pooled;        // N x Cin
        BatchNormCache bn;
        Tensor bn_out, relu1, hidden, relu2, logits, alpha_flat;  // attention intermediates
        Mode mode = Mode::Eval;
    };

    /// Batched forward over x (N x H x P x Cin) -> N x H x P x Cout.
    /// Train mode updates the attention head's running BN statistics.
    Tensor forward(const Tensor& x, Mode mode, Cache* cache = nullptr);

    /// Batched backward; accumulates parameter gradients (kernels, biases,
    /// attention) into the Parameters' grad buffers and returns the gradient
    /// w.r.t. x.
    Tensor backward(const Tensor& grad_out, const Tensor& x, const Cache& cache);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    int64_t parameter_count() const;
    int64_t attention_parameter_count() const;
};

DGridConvLayer make_dgridconv(const LayerShape& shape, Rng& rng, PadMode a_rows = PadMode::Circular,
                              PadMode a_cols = PadMode::Circular, PadMode b_rows = PadMode::Replicate,
                              PadMode b_cols = PadMode::Replicate);

/// Vanilla two-branch grid convolution of a single sample (no attention):
/// conv(pad_circular(x)) + conv(pad_replicate(x)).
Tensor gridconv_forward(const DGridConvLayer& layer, const Tensor& d_in);

/// Attention pipeline for a single sample; batch norm runs in the given
/// mode (per-sample calls use eval-mode running statistics).
Tensor attention_forward(const DGridConvLayer& layer, const Tensor& d_in, Mode mode = Mode::Eval);

/// Dynamic grid convolution of a single sample: each branch kernel is scaled
/// elementwise by alpha at every cell before the patch contraction.
Tensor dgridconv_forward(const DGridConvLayer& layer, const Tensor& d_in, Mode mode = Mode::Eval);

}  // namespace gridpose
