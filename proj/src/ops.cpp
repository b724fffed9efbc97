#include "gridpose/ops.hpp"

#include <algorithm>

namespace gridpose {

PadMode pad_mode_from_string(const std::string& s) {
    if (s == "circular") return PadMode::Circular;
    if (s == "replicate") return PadMode::Replicate;
    throw std::invalid_argument("unknown pad mode: " + s);
}

const char* to_string(PadMode m) { return m == PadMode::Circular ? "circular" : "replicate"; }

namespace {

inline int map_pad_index(int i, int s, int extent, PadMode mode) {
    int src = i - s;
    if (mode == PadMode::Circular) {
        src %= extent;
        if (src < 0) src += extent;
    } else {
        src = std::clamp(src, 0, extent - 1);
    }
    return src;
}

void check_grid3(const Tensor& t, const char* what) {
    if (t.ndim() != 3) throw std::invalid_argument(std::string(what) + ": expected H x P x C tensor, got " + shape_str(t.shape));
}

}  // namespace

Tensor pad_grid(const Tensor& grid, int s, PadMode rows_mode, PadMode cols_mode) {
    check_grid3(grid, "pad_grid");
    if (s < 0) throw std::invalid_argument("pad_grid: negative pad size");
    const int h = grid.dim(0), p = grid.dim(1), c = grid.dim(2);
    if (rows_mode == PadMode::Circular && s >= h)
        throw std::invalid_argument("pad_grid: circular pad " + std::to_string(s) + " >= row extent " + std::to_string(h));
    if (cols_mode == PadMode::Circular && s >= p)
        throw std::invalid_argument("pad_grid: circular pad " + std::to_string(s) + " >= column extent " + std::to_string(p));

    Tensor out({h + 2 * s, p + 2 * s, c});
    for (int i = 0; i < h + 2 * s; ++i) {
        const int si = map_pad_index(i, s, h, rows_mode);
        for (int j = 0; j < p + 2 * s; ++j) {
            const int sj = map_pad_index(j, s, p, cols_mode);
            const double* src = &grid.v[(static_cast<size_t>(si) * p + sj) * c];
            double* dst = &out.v[(static_cast<size_t>(i) * (p + 2 * s) + j) * c];
            std::copy(src, src + c, dst);
        }
    }
    return out;
}

Tensor pad_grid_backward(const Tensor& grad_padded, int rows, int cols, int s, PadMode rows_mode,
                         PadMode cols_mode) {
    check_grid3(grad_padded, "pad_grid_backward");
    const int c = grad_padded.dim(2);
    if (grad_padded.dim(0) != rows + 2 * s || grad_padded.dim(1) != cols + 2 * s)
        throw std::invalid_argument("pad_grid_backward: padded shape mismatch");

    Tensor out({rows, cols, c});
    for (int i = 0; i < rows + 2 * s; ++i) {
        const int si = map_pad_index(i, s, rows, rows_mode);
        for (int j = 0; j < cols + 2 * s; ++j) {
            const int sj = map_pad_index(j, s, cols, cols_mode);
            const double* src = &grad_padded.v[(static_cast<size_t>(i) * (cols + 2 * s) + j) * c];
            double* dst = &out.v[(static_cast<size_t>(si) * cols + sj) * c];
            for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
    }
    return out;
}

Tensor conv2d(const Tensor& padded, const Tensor& kernel, const Tensor& bias) {
    check_grid3(padded, "conv2d");
    if (kernel.ndim() != 4) throw std::invalid_argument("conv2d: kernel must be K x K x Cin x Cout");
    const int hp = padded.dim(0), wp = padded.dim(1), cin = padded.dim(2);
    const int k = kernel.dim(0), cout = kernel.dim(3);
    if (kernel.dim(1) != k) throw std::invalid_argument("conv2d: kernel must be square");
    if (kernel.dim(2) != cin)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(cin) + " do not match kernel " +
                                    std::to_string(kernel.dim(2)));
    if (bias.numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");
    if (hp < k || wp < k) throw std::invalid_argument("conv2d: padded input smaller than kernel");

    const int oh = hp - k + 1, ow = wp - k + 1;
    Tensor out({oh, ow, cout});
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            double* __restrict__ acc = &out.v[(static_cast<size_t>(i) * ow + j) * cout];
            std::copy(bias.v.begin(), bias.v.end(), acc);
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj) {
                    const double* __restrict__ x = &padded.v[(static_cast<size_t>(i + ki) * wp + (j + kj)) * cin];
                    const double* __restrict__ w = &kernel.v[(static_cast<size_t>(ki) * k + kj) * cin * cout];
                    for (int ci = 0; ci < cin; ++ci) {
                        const double xv = x[ci];
                        const double* __restrict__ wrow = w + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) acc[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& padded, const Tensor& kernel) {
    check_grid3(grad_out, "conv2d_backward");
    check_grid3(padded, "conv2d_backward");
    const int hp = padded.dim(0), wp = padded.dim(1), cin = padded.dim(2);
    const int k = kernel.dim(0), cout = kernel.dim(3);
    const int oh = hp - k + 1, ow = wp - k + 1;
    if (grad_out.dim(0) != oh || grad_out.dim(1) != ow || grad_out.dim(2) != cout)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");
    if (kernel.dim(2) != cin) throw std::invalid_argument("conv2d_backward: channel mismatch");

    Conv2dGrads g{Tensor(padded.shape), Tensor(kernel.shape), Tensor({cout})};
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            const double* __restrict__ go = &grad_out.v[(static_cast<size_t>(i) * ow + j) * cout];
            for (int co = 0; co < cout; ++co) g.bias.v[static_cast<size_t>(co)] += go[co];
            for (int ki = 0; ki < k; ++ki) {
                for (int kj = 0; kj < k; ++kj) {
                    const size_t xoff = (static_cast<size_t>(i + ki) * wp + (j + kj)) * cin;
                    const size_t woff = (static_cast<size_t>(ki) * k + kj) * cin * cout;
                    const double* __restrict__ x = &padded.v[xoff];
                    double* __restrict__ gx = &g.input.v[xoff];
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* __restrict__ wrow = &kernel.v[woff + static_cast<size_t>(ci) * cout];
                        double* __restrict__ gw = &g.kernel.v[woff + static_cast<size_t>(ci) * cout];
                        const double xv = x[ci];
                        double dot = 0.0;
                        for (int co = 0; co < cout; ++co) {
                            dot += wrow[co] * go[co];
                            gw[co] += xv * go[co];
                        }
                        gx[ci] += dot;
                    }
                }
            }
        }
    }
    return g;
}

Tensor extract_patch(const Tensor& padded, int i, int j, int k) {
    check_grid3(padded, "extract_patch");
    const int s = (k - 1) / 2;
    const int h = padded.dim(0) - 2 * s, p = padded.dim(1) - 2 * s, c = padded.dim(2);
    if (i < 0 || i >= h || j < 0 || j >= p)
        throw std::invalid_argument("extract_patch: center (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") outside unpadded bounds");
    Tensor patch({k, k, c});
    for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj) {
            const double* src = &padded.v[(static_cast<size_t>(i + ki) * padded.dim(1) + (j + kj)) * c];
            std::copy(src, src + c, &patch.v[(static_cast<size_t>(ki) * k + kj) * c]);
        }
    return patch;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, double momentum, double eps, BatchNormCache* cache) {
    if (x.ndim() != 2) throw std::invalid_argument("batch_norm: expected N x F input");
    const int n = x.dim(0), f = x.dim(1);
    if (gamma.numel() != f || beta.numel() != f || running_mean.numel() != f || running_var.numel() != f)
        throw std::invalid_argument("batch_norm: parameter size mismatch");
    if (eps <= 0) throw std::invalid_argument("batch_norm: eps must be positive");
    if (mode == Mode::Train && n < 2)
        throw std::invalid_argument("batch_norm: train mode requires a batch of at least 2");

    Tensor out({n, f});
    std::vector<double> mean(static_cast<size_t>(f), 0.0), inv_std(static_cast<size_t>(f), 0.0);
    if (mode == Mode::Train) {
        std::vector<double> var(static_cast<size_t>(f), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j) mean[static_cast<size_t>(j)] += x.at(i, j);
        for (int j = 0; j < f; ++j) mean[static_cast<size_t>(j)] /= n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j) {
                const double d = x.at(i, j) - mean[static_cast<size_t>(j)];
                var[static_cast<size_t>(j)] += d * d;
            }
        for (int j = 0; j < f; ++j) {
            const double biased = var[static_cast<size_t>(j)] / n;
            const double unbiased = var[static_cast<size_t>(j)] / (n - 1);
            inv_std[static_cast<size_t>(j)] = 1.0 / std::sqrt(biased + eps);
            running_mean.v[static_cast<size_t>(j)] =
                (1.0 - momentum) * running_mean.v[static_cast<size_t>(j)] + momentum * mean[static_cast<size_t>(j)];
            running_var.v[static_cast<size_t>(j)] =
                (1.0 - momentum) * running_var.v[static_cast<size_t>(j)] + momentum * unbiased;
        }
    } else {
        for (int j = 0; j < f; ++j) {
            mean[static_cast<size_t>(j)] = running_mean.v[static_cast<size_t>(j)];
            inv_std[static_cast<size_t>(j)] = 1.0 / std::sqrt(running_var.v[static_cast<size_t>(j)] + eps);
        }
    }

    Tensor xhat({n, f});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) {
            const double h = (x.at(i, j) - mean[static_cast<size_t>(j)]) * inv_std[static_cast<size_t>(j)];
            xhat.at(i, j) = h;
            out.at(i, j) = gamma.v[static_cast<size_t>(j)] * h + beta.v[static_cast<size_t>(j)];
        }
    if (cache) {
        cache->mode = mode;
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->n = n;
    }
    return out;
}

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormCache& cache, const Tensor& gamma) {
    const int n = grad_out.dim(0), f = grad_out.dim(1);
    if (cache.xhat.shape != grad_out.shape) throw std::invalid_argument("batch_norm_backward: shape mismatch");

    BatchNormGrads g{Tensor({n, f}), Tensor({f}), Tensor({f})};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) {
            g.gamma.v[static_cast<size_t>(j)] += grad_out.at(i, j) * cache.xhat.at(i, j);
            g.beta.v[static_cast<size_t>(j)] += grad_out.at(i, j);
        }
    if (cache.mode == Mode::Eval) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j)
                g.x.at(i, j) = grad_out.at(i, j) * gamma.v[static_cast<size_t>(j)] * cache.inv_std[static_cast<size_t>(j)];
        return g;
    }
    // Train mode: normalize-by-batch-statistics gradient.
    for (int j = 0; j < f; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int i = 0; i < n; ++i) {
            sum_g += grad_out.at(i, j);
            sum_gx += grad_out.at(i, j) * cache.xhat.at(i, j);
        }
        const double scale = gamma.v[static_cast<size_t>(j)] * cache.inv_std[static_cast<size_t>(j)];
        for (int i = 0; i < n; ++i)
            g.x.at(i, j) = scale * (grad_out.at(i, j) - sum_g / n - cache.xhat.at(i, j) * sum_gx / n);
    }
    return g;
}

Tensor activation(const Tensor& x, Act kind) {
    Tensor out(x.shape);
    if (kind == Act::Relu) {
        for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
    } else {
        for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
    }
    return out;
}

Tensor activation_backward(const Tensor& grad_out, const Tensor& y, Act kind) {
    if (!grad_out.same_shape(y)) throw std::invalid_argument("activation_backward: shape mismatch");
    Tensor g(y.shape);
    if (kind == Act::Relu) {
        for (size_t i = 0; i < y.v.size(); ++i) g.v[i] = y.v[i] > 0.0 ? grad_out.v[i] : 0.0;
    } else {
        for (size_t i = 0; i < y.v.size(); ++i) g.v[i] = grad_out.v[i] * y.v[i] * (1.0 - y.v[i]);
    }
    return g;
}

DropoutResult dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    DropoutResult r;
    if (mode == Mode::Eval || p == 0.0) {
        r.y = x;
        return r;
    }
    r.y = Tensor(x.shape);
    r.mask.resize(x.v.size());
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < x.v.size(); ++i) {
        const bool keep = rng.uniform() >= p;
        r.mask[i] = keep ? 1 : 0;
        r.y.v[i] = keep ? x.v[i] * scale : 0.0;
    }
    return r;
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutResult& fwd, double p) {
    if (fwd.mask.empty()) return grad_out;  // identity forward
    if (grad_out.v.size() != fwd.mask.size()) throw std::invalid_argument("dropout_backward: shape mismatch");
    Tensor g(grad_out.shape);
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = fwd.mask[i] ? grad_out.v[i] * scale : 0.0;
    return g;
}

Tensor global_average_pool(const Tensor& grid) {
    check_grid3(grid, "global_average_pool");
    const int h = grid.dim(0), p = grid.dim(1), c = grid.dim(2);
    if (h < 1 || p < 1) throw std::invalid_argument("global_average_pool: empty grid");
    Tensor out({c});
    for (int i = 0; i < h * p; ++i)
        for (int ch = 0; ch < c; ++ch) out.v[static_cast<size_t>(ch)] += grid.v[static_cast<size_t>(i) * c + ch];
    for (int ch = 0; ch < c; ++ch) out.v[static_cast<size_t>(ch)] /= h * p;
    return out;
}

Tensor global_average_pool_backward(const Tensor& grad_out, int rows, int cols) {
    const int c = static_cast<int>(grad_out.numel());
    Tensor g({rows, cols, c});
    const double inv = 1.0 / (rows * cols);
    for (int i = 0; i < rows * cols; ++i)
        for (int ch = 0; ch < c; ++ch) g.v[static_cast<size_t>(i) * c + ch] = grad_out.v[static_cast<size_t>(ch)] * inv;
    return g;
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.ndim() != 2 || weight.ndim() != 2) throw std::invalid_argument("affine: expected 2-d operands");
    const int n = x.dim(0), fin = x.dim(1), fout = weight.dim(1);
    if (weight.dim(0) != fin || bias.numel() != fout)
        throw std::invalid_argument("affine: shape mismatch x" + shape_str(x.shape) + " w" + shape_str(weight.shape));
    Tensor out({n, fout});
    for (int i = 0; i < n; ++i) {
        double* __restrict__ acc = &out.v[static_cast<size_t>(i) * fout];
        std::copy(bias.v.begin(), bias.v.end(), acc);
        const double* __restrict__ xrow = &x.v[static_cast<size_t>(i) * fin];
        for (int j = 0; j < fin; ++j) {
            const double xv = xrow[j];
            const double* __restrict__ wrow = &weight.v[static_cast<size_t>(j) * fout];
            for (int k = 0; k < fout; ++k) acc[k] += xv * wrow[k];
        }
    }
    return out;
}

AffineGrads affine_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weight) {
    const int n = x.dim(0), fin = x.dim(1), fout = weight.dim(1);
    if (grad_out.dim(0) != n || grad_out.dim(1) != fout)
        throw std::invalid_argument("affine_backward: grad_out shape mismatch");
    AffineGrads g{Tensor({n, fin}), Tensor({fin, fout}), Tensor({fout})};
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ go = &grad_out.v[static_cast<size_t>(i) * fout];
        const double* __restrict__ xrow = &x.v[static_cast<size_t>(i) * fin];
        double* __restrict__ gx = &g.x.v[static_cast<size_t>(i) * fin];
        for (int k = 0; k < fout; ++k) g.bias.v[static_cast<size_t>(k)] += go[k];
        for (int j = 0; j < fin; ++j) {
            const double* __restrict__ wrow = &weight.v[static_cast<size_t>(j) * fout];
            double* __restrict__ gw = &g.weight.v[static_cast<size_t>(j) * fout];
            double dot = 0.0;
            for (int k = 0; k < fout; ++k) {
                dot += wrow[k] * go[k];
                gw[k] += xrow[j] * go[k];
            }
            gx[j] = dot;
        }
    }
    return g;
}

}  // namespace gridpose
