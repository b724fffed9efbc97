#pragma once

#include "gridpose/tensor.hpp"

namespace gridpose {

enum class Mode { Train, Eval };

enum class PadMode { Circular, Replicate };

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEps = 1e-5;

PadMode pad_mode_from_string(const std::string& s);
const char* to_string(PadMode m);

/// Pads an H x P x C grid by s cells on every side. Circular wraps around,
/// replicate copies the nearest edge cell. Row and column axes may use
/// different modes. Circular wrap with s >= axis extent is rejected.
Tensor pad_grid(const Tensor& grid, int s, PadMode rows_mode, PadMode cols_mode);
inline Tensor pad_grid(const Tensor& grid, int s, PadMode mode) { return pad_grid(grid, s, mode, mode); }

/// Scatters a gradient on the padded grid back onto the H x P source grid.
Tensor pad_grid_backward(const Tensor& grad_padded, int rows, int cols, int s, PadMode rows_mode,
                         PadMode cols_mode);

/// Valid cross-correlation, stride 1. Input is an already padded grid
/// (Hp x Wp x Cin), kernel is K x K x Cin x Cout, bias has Cout entries.
/// Output spatial size is (Hp-K+1) x (Wp-K+1).
Tensor conv2d(const Tensor& padded, const Tensor& kernel, const Tensor& bias);

struct Conv2dGrads {
    Tensor input;   // same shape as the padded input
    Tensor kernel;  // K x K x Cin x Cout
    Tensor bias;    // Cout
};
Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& padded, const Tensor& kernel);

/// K x K x C window of the padded grid whose center lies over unpadded cell
/// (i, j); padding size is assumed to be (K-1)/2.
Tensor extract_patch(const Tensor& padded, int i, int j, int k);

struct BatchNormCache {
    Mode mode = Mode::Train;
    Tensor xhat;                    // N x F, normalized pre-affine values
    std::vector<double> inv_std;    // per feature, 1/sqrt(var+eps)
    int n = 0;
};

/// Batch normalization over an N x F matrix (per-feature statistics).
/// Train mode normalizes by batch statistics (biased variance) and updates
/// running stats; running_var tracks the unbiased batch variance. Eval mode
/// normalizes by the running statistics. Train mode requires N >= 2.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, double momentum, double eps,
                  BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor x;
    Tensor gamma;
    Tensor beta;
};
BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                   const Tensor& gamma);

enum class Act { Relu, Sigmoid };

Tensor activation(const Tensor& x, Act kind);
/// Backward from the forward *output* y (both relu and sigmoid gradients are
/// expressible in terms of y alone).
Tensor activation_backward(const Tensor& grad_out, const Tensor& y, Act kind);

struct DropoutResult {
    Tensor y;
    std::vector<uint8_t> mask;  // empty in eval mode or when p == 0
};

/// Inverted dropout: train mode zeroes entries with probability p and scales
/// survivors by 1/(1-p); eval mode is the identity. Mask entries are drawn
/// from rng in flat element order. Requires 0 <= p < 1.
DropoutResult dropout(const Tensor& x, double p, Mode mode, Rng& rng);
Tensor dropout_backward(const Tensor& grad_out, const DropoutResult& fwd, double p);

/// Mean over all H*P cells, per channel. grid is H x P x C, result has C entries.
Tensor global_average_pool(const Tensor& grid);
Tensor global_average_pool_backward(const Tensor& grad_out, int rows, int cols);

/// x (N x Fin) * weight (Fin x Fout) + bias (Fout).
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct AffineGrads {
    Tensor x;
    Tensor weight;
    Tensor bias;
};
AffineGrads affine_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weight);

}  // namespace gridpose
