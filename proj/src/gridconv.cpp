#include "gridpose/gridconv.hpp"

#include <cmath>

#include "gridpose/parallel.hpp"

namespace gridpose {

namespace {

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

void check_input(const LayerShape& sh, const Tensor& x) {
    if (x.ndim() != 4 || x.dim(1) != sh.rows || x.dim(2) != sh.cols || x.dim(3) != sh.cin)
        throw std::invalid_argument("dgridconv: input " + shape_str(x.shape) + " does not match layer (" +
                                    std::to_string(sh.rows) + "x" + std::to_string(sh.cols) + "x" +
                                    std::to_string(sh.cin) + ")");
}

Tensor slice_sample(const Tensor& x, int n) {
    const int h = x.dim(1), p = x.dim(2), c = x.dim(3);
    Tensor out({h, p, c});
    const size_t stride = static_cast<size_t>(h) * p * c;
    std::copy(x.v.begin() + static_cast<long>(stride) * n, x.v.begin() + static_cast<long>(stride) * (n + 1),
              out.v.begin());
    return out;
}

/// out(i,j,:) += sum over the K x K patch of (alpha-scaled) kernel columns.
/// Kernel taps run outermost so each Cin x Cout slice stays cache-hot across
/// the whole grid.
void branch_forward_sample(const LayerShape& sh, const Tensor& padded, const Tensor& kernel,
                           const Tensor& bias, const double* alpha, double* out) {
    const int h = sh.rows, p = sh.cols, k = sh.kernel, cin = sh.cin, cout = sh.cout;
    const int wp = p + 2 * sh.pad();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < p; ++j) {
            double* acc = out + (static_cast<size_t>(i) * p + j) * cout;
            for (int co = 0; co < cout; ++co) acc[co] += bias.v[static_cast<size_t>(co)];
        }
    for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
            const double* __restrict__ w = &kernel.v[(static_cast<size_t>(ki) * k + kj) * cin * cout];
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < p; ++j) {
                    double* __restrict__ acc = out + (static_cast<size_t>(i) * p + j) * cout;
                    const double a = alpha ? alpha[(static_cast<size_t>(i) * p + j) * k * k + ki * k + kj] : 1.0;
                    const double* __restrict__ x = &padded.v[(static_cast<size_t>(i + ki) * wp + (j + kj)) * cin];
                    for (int ci = 0; ci < cin; ++ci) {
                        const double xv = a * x[ci];
                        const double* __restrict__ wrow = w + static_cast<size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) acc[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
}

void branch_backward_sample(const LayerShape& sh, const Tensor& padded, const Tensor& kernel,
                            const double* alpha, const double* gout, double* gpad, double* gkernel,
                            double* gbias, double* galpha) {
    const int h = sh.rows, p = sh.cols, k = sh.kernel, cin = sh.cin, cout = sh.cout;
    const int wp = p + 2 * sh.pad();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < p; ++j) {
            const double* go = gout + (static_cast<size_t>(i) * p + j) * cout;
            for (int co = 0; co < cout; ++co) gbias[co] += go[co];
        }
    for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
            const size_t woff = (static_cast<size_t>(ki) * k + kj) * cin * cout;
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < p; ++j) {
                    const double* __restrict__ go = gout + (static_cast<size_t>(i) * p + j) * cout;
                    const double a =
                        alpha ? alpha[(static_cast<size_t>(i) * p + j) * k * k + ki * k + kj] : 1.0;
                    const size_t xoff = (static_cast<size_t>(i + ki) * wp + (j + kj)) * cin;
                    const double* __restrict__ x = &padded.v[xoff];
                    double* __restrict__ gx = gpad + xoff;
                    double da = 0.0;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* __restrict__ wrow = &kernel.v[woff + static_cast<size_t>(ci) * cout];
                        double* __restrict__ gw = gkernel + woff + static_cast<size_t>(ci) * cout;
                        const double xv = x[ci];
                        const double axv = a * xv;
                        double dot = 0.0;
                        for (int co = 0; co < cout; ++co) {
                            dot += wrow[co] * go[co];
                            gw[co] += axv * go[co];
                        }
                        gx[ci] += a * dot;
                        da += xv * dot;
                    }
                    if (galpha) galpha[(static_cast<size_t>(i) * p + j) * k * k + ki * k + kj] += da;
                }
            }
        }
    }
}

}  // namespace

DGridConvLayer make_dgridconv(const LayerShape& shape, Rng& rng, PadMode a_rows, PadMode a_cols,
                              PadMode b_rows, PadMode b_cols) {
    if (shape.kernel % 2 == 0) throw std::invalid_argument("dgridconv: kernel size must be odd");
    DGridConvLayer layer;
    layer.shape = shape;
    // Fan-in uniform for kernels and biases alike (keeps pre-activations
    // away from exact ReLU kinks at init).
    const double bound = std::sqrt(1.0 / (shape.kernel * shape.kernel * shape.cin));
    layer.branch_a.kernel =
        Parameter(uniform_tensor({shape.kernel, shape.kernel, shape.cin, shape.cout}, bound, rng));
    layer.branch_a.bias = Parameter(uniform_tensor({shape.cout}, bound, rng));
    layer.branch_a.rows_mode = a_rows;
    layer.branch_a.cols_mode = a_cols;
    layer.branch_b.kernel =
        Parameter(uniform_tensor({shape.kernel, shape.kernel, shape.cin, shape.cout}, bound, rng));
    layer.branch_b.bias = Parameter(uniform_tensor({shape.cout}, bound, rng));
    layer.branch_b.rows_mode = b_rows;
    layer.branch_b.cols_mode = b_cols;
    if (shape.dynamic) {
        AttentionHead head;
        head.bn_gamma = Parameter(Tensor::full({shape.cin}, 1.0));
        head.bn_beta = Parameter(Tensor({shape.cin}));
        head.run_mean = Tensor({shape.cin});
        head.run_var = Tensor::full({shape.cin}, 1.0);
        const double fc1_bound = std::sqrt(1.0 / shape.cin);
        head.fc1_w = Parameter(uniform_tensor({shape.cin, AttentionHead::kHidden}, fc1_bound, rng));
        head.fc1_b = Parameter(uniform_tensor({AttentionHead::kHidden}, fc1_bound, rng));
        const int out = shape.rows * shape.cols * shape.kernel * shape.kernel;
        const double fc2_bound = std::sqrt(1.0 / AttentionHead::kHidden);
        head.fc2_w = Parameter(uniform_tensor({AttentionHead::kHidden, out}, fc2_bound, rng));
        head.fc2_b = Parameter(uniform_tensor({out}, fc2_bound, rng));
        layer.attention = std::move(head);
    }
    return layer;
}

Tensor DGridConvLayer::forward(const Tensor& x, Mode mode, Cache* cache) {
    check_input(shape, x);
    const int n = x.dim(0);
    const int alpha_len = shape.rows * shape.cols * shape.kernel * shape.kernel;

    Cache local;
    Cache& c = cache ? *cache : local;
    c.mode = mode;
    c.samples.assign(static_cast<size_t>(n), SampleCache{});

    if (shape.dynamic) {
        if (!attention) throw std::invalid_argument("dgridconv: dynamic layer without attention head");
        c.pooled = Tensor({n, shape.cin});
        for (int i = 0; i < n; ++i) {
            const Tensor pooled = global_average_pool(slice_sample(x, i));
            std::copy(pooled.v.begin(), pooled.v.end(), c.pooled.v.begin() + static_cast<long>(i) * shape.cin);
        }
        AttentionHead& head = *attention;
        c.bn_out = batch_norm(c.pooled, head.bn_gamma.t, head.bn_beta.t, head.run_mean, head.run_var, mode,
                              kBnMomentum, kBnEps, &c.bn);
        c.relu1 = activation(c.bn_out, Act::Relu);
        c.hidden = affine(c.relu1, attention->fc1_w.t, attention->fc1_b.t);
        c.relu2 = activation(c.hidden, Act::Relu);
        c.logits = affine(c.relu2, attention->fc2_w.t, attention->fc2_b.t);
        c.alpha_flat = activation(c.logits, Act::Sigmoid);
    }

    Tensor out({n, shape.rows, shape.cols, shape.cout});
    const size_t out_stride = static_cast<size_t>(shape.rows) * shape.cols * shape.cout;
    parallel_chunks(n, [&](int, int begin, int end) {
        for (int i = begin; i < end; ++i) {
            SampleCache& sc = c.samples[static_cast<size_t>(i)];
            const Tensor xi = slice_sample(x, i);
            sc.padded_a = pad_grid(xi, shape.pad(), branch_a.rows_mode, branch_a.cols_mode);
            sc.padded_b = pad_grid(xi, shape.pad(), branch_b.rows_mode, branch_b.cols_mode);
            const double* alpha = nullptr;
            if (shape.dynamic) {
                sc.alpha = Tensor({shape.rows, shape.cols, shape.kernel, shape.kernel});
                std::copy(c.alpha_flat.v.begin() + static_cast<long>(i) * alpha_len,
                          c.alpha_flat.v.begin() + static_cast<long>(i + 1) * alpha_len, sc.alpha.v.begin());
                alpha = sc.alpha.v.data();
            }
            double* o = &out.v[static_cast<size_t>(i) * out_stride];
            branch_forward_sample(shape, sc.padded_a, branch_a.kernel.t, branch_a.bias.t, alpha, o);
            branch_forward_sample(shape, sc.padded_b, branch_b.kernel.t, branch_b.bias.t, alpha, o);
        }
    });
    return out;
}

Tensor DGridConvLayer::backward(const Tensor& grad_out, const Tensor& x, const Cache& cache) {
    check_input(shape, x);
    const int n = x.dim(0);
    if (grad_out.dim(0) != n || grad_out.dim(1) != shape.rows || grad_out.dim(2) != shape.cols ||
        grad_out.dim(3) != shape.cout)
        throw std::invalid_argument("dgridconv backward: grad_out shape mismatch");
    if (static_cast<int>(cache.samples.size()) != n)
        throw std::invalid_argument("dgridconv backward: cache does not match batch");

    branch_a.kernel.t.ensure_grad();
    branch_a.bias.t.ensure_grad();
    branch_b.kernel.t.ensure_grad();
    branch_b.bias.t.ensure_grad();

    const int alpha_len = shape.rows * shape.cols * shape.kernel * shape.kernel;
    const size_t out_stride = static_cast<size_t>(shape.rows) * shape.cols * shape.cout;
    const size_t in_stride = static_cast<size_t>(shape.rows) * shape.cols * shape.cin;

    Tensor gx({n, shape.rows, shape.cols, shape.cin});
    Tensor galpha_flat = shape.dynamic ? Tensor({n, alpha_len}) : Tensor();

    // Per-chunk parameter-gradient buffers keep the reduction order fixed
    // regardless of how many worker threads run.
    const int chunks = parallel_chunk_count(n);
    struct ChunkGrads {
        std::vector<double> ka, ba, kb, bb;
    };
    std::vector<ChunkGrads> cg(static_cast<size_t>(chunks));
    for (auto& g : cg) {
        g.ka.assign(branch_a.kernel.t.v.size(), 0.0);
        g.ba.assign(branch_a.bias.t.v.size(), 0.0);
        g.kb.assign(branch_b.kernel.t.v.size(), 0.0);
        g.bb.assign(branch_b.bias.t.v.size(), 0.0);
    }

    parallel_chunks(n, [&](int chunk, int begin, int end) {
        ChunkGrads& g = cg[static_cast<size_t>(chunk)];
        for (int i = begin; i < end; ++i) {
            const SampleCache& sc = cache.samples[static_cast<size_t>(i)];
            const double* go = &grad_out.v[static_cast<size_t>(i) * out_stride];
            const double* alpha = shape.dynamic ? sc.alpha.v.data() : nullptr;
            double* ga = shape.dynamic ? &galpha_flat.v[static_cast<size_t>(i) * alpha_len] : nullptr;

            Tensor gpad_a(sc.padded_a.shape), gpad_b(sc.padded_b.shape);
            branch_backward_sample(shape, sc.padded_a, branch_a.kernel.t, alpha, go, gpad_a.v.data(),
                                   g.ka.data(), g.ba.data(), ga);
            branch_backward_sample(shape, sc.padded_b, branch_b.kernel.t, alpha, go, gpad_b.v.data(),
                                   g.kb.data(), g.bb.data(), ga);

            const Tensor gxa = pad_grid_backward(gpad_a, shape.rows, shape.cols, shape.pad(),
                                                 branch_a.rows_mode, branch_a.cols_mode);
            const Tensor gxb = pad_grid_backward(gpad_b, shape.rows, shape.cols, shape.pad(),
                                                 branch_b.rows_mode, branch_b.cols_mode);
            double* dst = &gx.v[static_cast<size_t>(i) * in_stride];
            for (size_t e = 0; e < in_stride; ++e) dst[e] = gxa.v[e] + gxb.v[e];
        }
    });
    for (const auto& g : cg) {
        for (size_t e = 0; e < g.ka.size(); ++e) branch_a.kernel.t.grad[e] += g.ka[e];
        for (size_t e = 0; e < g.ba.size(); ++e) branch_a.bias.t.grad[e] += g.ba[e];
        for (size_t e = 0; e < g.kb.size(); ++e) branch_b.kernel.t.grad[e] += g.kb[e];
        for (size_t e = 0; e < g.bb.size(); ++e) branch_b.bias.t.grad[e] += g.bb[e];
    }

    if (shape.dynamic) {
        AttentionHead& head = *attention;
        head.bn_gamma.t.ensure_grad();
        head.bn_beta.t.ensure_grad();
        head.fc1_w.t.ensure_grad();
        head.fc1_b.t.ensure_grad();
        head.fc2_w.t.ensure_grad();
        head.fc2_b.t.ensure_grad();

        const Tensor glogits = activation_backward(galpha_flat, cache.alpha_flat, Act::Sigmoid);
        AffineGrads a2 = affine_backward(glogits, cache.relu2, head.fc2_w.t);
        for (size_t e = 0; e < a2.weight.v.size(); ++e) head.fc2_w.t.grad[e] += a2.weight.v[e];
        for (size_t e = 0; e < a2.bias.v.size(); ++e) head.fc2_b.t.grad[e] += a2.bias.v[e];
        const Tensor ghidden = activation_backward(a2.x, cache.relu2, Act::Relu);
        AffineGrads a1 = affine_backward(ghidden, cache.relu1, head.fc1_w.t);
        for (size_t e = 0; e < a1.weight.v.size(); ++e) head.fc1_w.t.grad[e] += a1.weight.v[e];
        for (size_t e = 0; e < a1.bias.v.size(); ++e) head.fc1_b.t.grad[e] += a1.bias.v[e];
        const Tensor gbn_out = activation_backward(a1.x, cache.relu1, Act::Relu);
        BatchNormGrads bn = batch_norm_backward(gbn_out, cache.bn, head.bn_gamma.t);
        for (size_t e = 0; e < bn.gamma.v.size(); ++e) head.bn_gamma.t.grad[e] += bn.gamma.v[e];
        for (size_t e = 0; e < bn.beta.v.size(); ++e) head.bn_beta.t.grad[e] += bn.beta.v[e];

        for (int i = 0; i < n; ++i) {
            Tensor row({shape.cin});
            std::copy(bn.x.v.begin() + static_cast<long>(i) * shape.cin,
                      bn.x.v.begin() + static_cast<long>(i + 1) * shape.cin, row.v.begin());
            const Tensor gpool = global_average_pool_backward(row, shape.rows, shape.cols);
            double* dst = &gx.v[static_cast<size_t>(i) * in_stride];
            for (size_t e = 0; e < in_stride; ++e) dst[e] += gpool.v[e];
        }
    }
    return gx;
}

std::vector<Parameter*> DGridConvLayer::parameters() {
    std::vector<Parameter*> out{&branch_a.kernel, &branch_a.bias, &branch_b.kernel, &branch_b.bias};
    if (attention) {
        out.push_back(&attention->bn_gamma);
        out.push_back(&attention->bn_beta);
        out.push_back(&attention->fc1_w);
        out.push_back(&attention->fc1_b);
        out.push_back(&attention->fc2_w);
        out.push_back(&attention->fc2_b);
    }
    return out;
}

std::vector<const Parameter*> DGridConvLayer::parameters() const {
    auto mut = const_cast<DGridConvLayer*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

int64_t DGridConvLayer::parameter_count() const {
    int64_t n = 0;
    for (const Parameter* p : parameters()) n += p->numel();
    return n;
}

int64_t DGridConvLayer::attention_parameter_count() const {
    if (!attention) return 0;
    return attention->bn_gamma.numel() + attention->bn_beta.numel() + attention->fc1_w.numel() +
           attention->fc1_b.numel() + attention->fc2_w.numel() + attention->fc2_b.numel();
}

Tensor gridconv_forward(const DGridConvLayer& layer, const Tensor& d_in) {
    if (d_in.ndim() != 3) throw std::invalid_argument("gridconv_forward: expected H x P x C sample");
    const auto& sh = layer.shape;
    Tensor out({sh.rows, sh.cols, sh.cout});
    const Tensor pa = pad_grid(d_in, sh.pad(), layer.branch_a.rows_mode, layer.branch_a.cols_mode);
    const Tensor pb = pad_grid(d_in, sh.pad(), layer.branch_b.rows_mode, layer.branch_b.cols_mode);
    branch_forward_sample(sh, pa, layer.branch_a.kernel.t, layer.branch_a.bias.t, nullptr, out.v.data());
    branch_forward_sample(sh, pb, layer.branch_b.kernel.t, layer.branch_b.bias.t, nullptr, out.v.data());
    return out;
}

Tensor attention_forward(const DGridConvLayer& layer, const Tensor& d_in, Mode mode) {
    if (!layer.attention) throw std::invalid_argument("attention_forward: layer has no attention head");
    const auto& sh = layer.shape;
    auto& head = const_cast<AttentionHead&>(*layer.attention);  // running stats only touched in train mode
    Tensor pooled({1, sh.cin});
    pooled.v = global_average_pool(d_in).v;
    BatchNormCache bn_cache;
    Tensor bn_out = batch_norm(pooled, head.bn_gamma.t, head.bn_beta.t, head.run_mean, head.run_var, mode,
                               kBnMomentum, kBnEps, &bn_cache);
    Tensor relu1 = activation(bn_out, Act::Relu);
    Tensor hidden = affine(relu1, layer.attention->fc1_w.t, layer.attention->fc1_b.t);
    Tensor relu2 = activation(hidden, Act::Relu);
    Tensor logits = affine(relu2, layer.attention->fc2_w.t, layer.attention->fc2_b.t);
    Tensor alpha_flat = activation(logits, Act::Sigmoid);
    Tensor alpha({sh.rows, sh.cols, sh.kernel, sh.kernel});
    alpha.v = alpha_flat.v;
    return alpha;
}

Tensor dgridconv_forward(const DGridConvLayer& layer, const Tensor& d_in, Mode mode) {
    const auto& sh = layer.shape;
    if (!sh.dynamic) return gridconv_forward(layer, d_in);
    const Tensor alpha = attention_forward(layer, d_in, mode);
    Tensor out({sh.rows, sh.cols, sh.cout});
    const Tensor pa = pad_grid(d_in, sh.pad(), layer.branch_a.rows_mode, layer.branch_a.cols_mode);
    const Tensor pb = pad_grid(d_in, sh.pad(), layer.branch_b.rows_mode, layer.branch_b.cols_mode);
    branch_forward_sample(sh, pa, layer.branch_a.kernel.t, layer.branch_a.bias.t, alpha.v.data(), out.v.data());
    branch_forward_sample(sh, pb, layer.branch_b.kernel.t, layer.branch_b.bias.t, alpha.v.data(), out.v.data());
    return out;
}

}  // namespace gridpose
