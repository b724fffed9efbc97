#include "gridpose/gln.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "gridpose/config_io.hpp"
#include "gridpose/csv.hpp"
#include "gridpose/metrics.hpp"

namespace gridpose {

SgtMode sgt_mode_from_string(const std::string& s) {
    if (s == "handcrafted") return SgtMode::Handcrafted;
    if (s == "learnable") return SgtMode::Learnable;
    if (s == "random") return SgtMode::Random;
    if (s == "file") return SgtMode::File;
    throw std::invalid_argument("unknown sgt mode: " + s);
}

const char* to_string(SgtMode m) {
    switch (m) {
        case SgtMode::Handcrafted: return "handcrafted";
        case SgtMode::Learnable: return "learnable";
        case SgtMode::Random: return "random";
        default: return "file";
    }
}

std::vector<int> GLNConfig::layer_kernels() const {
    std::vector<std::string> groups;
    size_t start = 0;
    while (true) {
        size_t pos = kernel_plan.find('-', start);
        groups.push_back(kernel_plan.substr(start, pos == std::string::npos ? pos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (static_cast<int>(groups.size()) != blocks + 2)
        throw std::invalid_argument("kernel_plan '" + kernel_plan + "' has " + std::to_string(groups.size()) +
                                    " groups; " + std::to_string(blocks) + " blocks need " +
                                    std::to_string(blocks + 2));
    auto digit = [&](char c) {
        if (c < '1' || c > '9') throw std::invalid_argument("kernel_plan: bad kernel digit in '" + kernel_plan + "'");
        return c - '0';
    };
    std::vector<int> kernels;
    if (groups.front().size() != 1 || groups.back().size() != 1)
        throw std::invalid_argument("kernel_plan: expand/shrink groups must be single digits");
    kernels.push_back(digit(groups.front()[0]));
    for (size_t g = 1; g + 1 < groups.size(); ++g) {
        if (groups[g].size() != 2)
            throw std::invalid_argument("kernel_plan: each block group needs exactly two digits");
        kernels.push_back(digit(groups[g][0]));
        kernels.push_back(digit(groups[g][1]));
    }
    kernels.push_back(digit(groups.back()[0]));
    for (int k : kernels)
        if (k % 2 == 0) throw std::invalid_argument("kernel_plan: kernel sizes must be odd");
    return kernels;
}

std::pair<PadMode, PadMode> parse_pad_modes(const std::string& s) {
    const size_t sep = s.find(':');
    if (sep == std::string::npos) {
        const PadMode m = pad_mode_from_string(s);
        return {m, m};
    }
    return {pad_mode_from_string(s.substr(0, sep)), pad_mode_from_string(s.substr(sep + 1))};
}

namespace {

Tensor reshape(Tensor t, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != t.numel()) throw std::invalid_argument("reshape: element count mismatch");
    t.shape = std::move(shape);
    return t;
}

Tensor slice3(const Tensor& batch, int i) {
    const int a = batch.dim(1), b = batch.dim(2);
    Tensor out({a, b});
    const size_t stride = static_cast<size_t>(a) * b;
    std::copy(batch.v.begin() + static_cast<long>(stride) * i, batch.v.begin() + static_cast<long>(stride) * (i + 1),
              out.v.begin());
    return out;
}

Tensor slice4(const Tensor& batch, int i) {
    const int a = batch.dim(1), b = batch.dim(2), c = batch.dim(3);
    Tensor out({a, b, c});
    const size_t stride = static_cast<size_t>(a) * b * c;
    std::copy(batch.v.begin() + static_cast<long>(stride) * i, batch.v.begin() + static_cast<long>(stride) * (i + 1),
              out.v.begin());
    return out;
}

}  // namespace

Tensor LayerBlock::forward(const Tensor& x, Mode mode, double dropout_p, Rng* rng, Tape* tape) {
    Tape local;
    Tape& t = tape ? *tape : local;
    t.input = x;
    Tensor y = conv.forward(x, mode, &t.conv);
    const int n = y.dim(0), h = y.dim(1), p = y.dim(2), c = y.dim(3);
    Tensor flat = reshape(std::move(y), {n * h * p, c});
    Tensor bn = batch_norm(flat, bn_gamma.t, bn_beta.t, bn_run_mean, bn_run_var, mode, kBnMomentum, kBnEps, &t.bn);
    t.relu_out = activation(bn, Act::Relu);
    Tensor out_flat;
    if (mode == Mode::Train && dropout_p > 0.0) {
        if (!rng) throw std::invalid_argument("gln: dropout in train mode needs an rng");
        t.drop = dropout(t.relu_out, dropout_p, mode, *rng);
        out_flat = t.drop.y;
    } else {
        t.drop = DropoutResult{};
        out_flat = t.relu_out;
    }
    return reshape(std::move(out_flat), {n, h, p, c});
}

Tensor LayerBlock::backward(const Tensor& grad_out, Tape& t, double dropout_p) {
    const int n = grad_out.dim(0), h = grad_out.dim(1), p = grad_out.dim(2), c = grad_out.dim(3);
    Tensor g = reshape(grad_out, {n * h * p, c});
    if (!t.drop.mask.empty()) g = dropout_backward(g, t.drop, dropout_p);
    g = activation_backward(g, t.relu_out, Act::Relu);
    BatchNormGrads bn = batch_norm_backward(g, t.bn, bn_gamma.t);
    bn_gamma.t.ensure_grad();
    bn_beta.t.ensure_grad();
    for (size_t e = 0; e < bn.gamma.v.size(); ++e) bn_gamma.t.grad[e] += bn.gamma.v[e];
    for (size_t e = 0; e < bn.beta.v.size(); ++e) bn_beta.t.grad[e] += bn.beta.v[e];
    Tensor gconv = reshape(std::move(bn.x), {n, h, p, c});
    return conv.backward(gconv, t.input, t.conv);
}

std::vector<Parameter*> LayerBlock::parameters() {
    auto out = conv.parameters();
    out.push_back(&bn_gamma);
    out.push_back(&bn_beta);
    return out;
}

GLNModel build_gln(const GLNConfig& config, const SkeletonTopology& topo) {
    topo.validate();
    if (config.blocks < 0) throw std::invalid_argument("build_gln: blocks must be >= 0");
    if (config.latent_channels < 1) throw std::invalid_argument("build_gln: latent_channels must be >= 1");
    if (config.grid.cells() < topo.joint_count())
        throw std::invalid_argument("build_gln: grid " + std::to_string(config.grid.rows) + "x" +
                                    std::to_string(config.grid.cols) + " cannot hold " +
                                    std::to_string(topo.joint_count()) + " joints");
    const auto kernels = config.layer_kernels();
    const auto [a_rows, a_cols] = parse_pad_modes(config.pad_modes_a);
    const auto [b_rows, b_cols] = parse_pad_modes(config.pad_modes_b);

    GLNModel model;
    model.config = config;
    model.topology = topo;
    Rng rng(config.seed);

    const bool canonical5x5 = config.grid == GridSpec{5, 5} && topo.same_joints(canonical_h36m17()) &&
                              topo.edges == canonical_h36m17().edges;
    switch (config.sgt_mode) {
        case SgtMode::Handcrafted:
            model.assignment = build_handcrafted_layout(topo, config.grid);
            break;
        case SgtMode::Random:
            model.assignment = random_sgt(topo, config.grid, rng);
            break;
        case SgtMode::File:
            model.assignment = load_layout_csv(config.layout_file, topo);
            if (!(model.assignment.grid == config.grid))
                throw std::invalid_argument("build_gln: layout file grid does not match config grid");
            break;
        case SgtMode::Learnable:
            break;  // initialized after the layer parameters below
    }

    auto make_block = [&](int kernel, int cin, int cout) {
        LayerBlock block;
        LayerShape sh{kernel, cin, cout, config.grid.rows, config.grid.cols, config.dynamic};
        block.conv = make_dgridconv(sh, rng, a_rows, a_cols, b_rows, b_cols);
        block.bn_gamma = Parameter(Tensor::full({cout}, 1.0));
        block.bn_beta = Parameter(Tensor({cout}));
        block.bn_run_mean = Tensor({cout});
        block.bn_run_var = Tensor::full({cout}, 1.0);
        return block;
    };

    size_t ki = 0;
    model.expand = make_block(kernels[ki++], 2, config.latent_channels);
    for (int b = 0; b < config.blocks; ++b) {
        ResidualBlock rb;
        rb.first = make_block(kernels[ki++], config.latent_channels, config.latent_channels);
        rb.second = make_block(kernels[ki++], config.latent_channels, config.latent_channels);
        model.blocks.push_back(std::move(rb));
    }
    LayerShape shrink_shape{kernels[ki++], config.latent_channels, 3, config.grid.rows, config.grid.cols,
                            config.dynamic};
    model.shrink = make_dgridconv(shrink_shape, rng, a_rows, a_cols, b_rows, b_cols);

    if (config.sgt_mode == SgtMode::Learnable) {
        if (canonical5x5) {
            const AssignmentMatrix seed = build_handcrafted_layout(topo, config.grid);
            model.autogrids = init_autogrids(&seed, config.grid, topo.joint_count(), rng);
            model.last_covering = seed;
        } else {
            model.autogrids = init_autogrids(nullptr, config.grid, topo.joint_count(), rng);
            model.last_covering = random_sgt(topo, config.grid, rng);
        }
        model.assignment = autogrids_argmax(*model.autogrids).s;
    } else {
        model.last_covering = model.assignment;
    }
    return model;
}

AssignmentMatrix GLNModel::effective_assignment(AssignmentMatrix sampled, bool update_state) {
    auto missing = sampled.uncovered_joints();
    if (missing.empty()) {
        if (update_state) last_covering = sampled;
        return sampled;
    }
    // Borrow the uncovered joints' cells from the last covering layout.
    ++coverage_fallback_events;
    AssignmentMatrix patched = sampled;
    for (int j : missing)
        for (int p = 0; p < patched.grid.cells(); ++p)
            if (last_covering.at(p, j)) {
                for (int q = 0; q < patched.joints; ++q) patched.at(p, q) = 0;
                patched.at(p, j) = 1;
            }
    if (!patched.covering()) return last_covering;
    return patched;
}

Tensor GLNModel::forward(const Tensor& g2d, Mode mode, Rng* rng, int epoch, GLNTape* tape) {
    const int joints = topology.joint_count();
    if (g2d.ndim() != 3 || g2d.dim(1) != joints || g2d.dim(2) != 2)
        throw std::invalid_argument("gln forward: expected N x " + std::to_string(joints) + " x 2 input, got " +
                                    shape_str(g2d.shape));
    require_finite(g2d, "gln input");
    const int n = g2d.dim(0);
    const int rows = config.grid.rows, cols = config.grid.cols;

    GLNTape local;
    GLNTape& t = tape ? *tape : local;
    t.input = g2d;

    if (autogrids) {
        if (mode == Mode::Train) {
            if (!rng) throw std::invalid_argument("gln forward: learnable train mode needs an rng");
            AutoGridsSample sample = autogrids_sample(*autogrids, *rng, epoch);
            t.sampled_soft = std::move(sample.s_soft);
            t.s_used = effective_assignment(std::move(sample.s));
            assignment = t.s_used;
        } else {
            // Deterministic argmax; uncovered joints borrow cells from the
            // last covering layout without advancing training state.
            t.s_used = effective_assignment(autogrids_argmax(*autogrids).s, /*update_state=*/false);
        }
    } else {
        t.s_used = assignment;
    }

    Tensor d0({n, rows, cols, 2});
    const size_t grid_stride = static_cast<size_t>(rows) * cols * 2;
    for (int i = 0; i < n; ++i) {
        const Tensor di = sgt_forward(t.s_used, slice3(g2d, i));
        std::copy(di.v.begin(), di.v.end(), d0.v.begin() + static_cast<long>(grid_stride) * i);
    }

    t.layer_tapes.assign(1 + 2 * static_cast<size_t>(config.blocks), LayerBlock::Tape{});
    size_t ti = 0;
    Tensor x = expand.forward(d0, mode, config.dropout_p, rng, &t.layer_tapes[ti++]);
    for (auto& block : blocks) {
        Tensor skip = x;
        Tensor y = block.first.forward(x, mode, config.dropout_p, rng, &t.layer_tapes[ti++]);
        y = block.second.forward(y, mode, config.dropout_p, rng, &t.layer_tapes[ti++]);
        for (size_t e = 0; e < y.v.size(); ++e) y.v[e] += skip.v[e];
        x = std::move(y);
    }
    t.shrink_input = x;
    t.d_out = shrink.forward(x, mode, &t.shrink_cache);

    Tensor out({n, joints, 3});
    const size_t out_stride = static_cast<size_t>(joints) * 3;
    for (int i = 0; i < n; ++i) {
        const Tensor gi = sgt_inverse(t.s_used, slice4(t.d_out, i));
        std::copy(gi.v.begin(), gi.v.end(), out.v.begin() + static_cast<long>(out_stride) * i);
    }
    t.output = out;
    require_finite(out, "gln output");
    return out;
}

void GLNModel::backward(const Tensor& grad_output, GLNTape& t) {
    const int n = grad_output.dim(0);
    const int rows = config.grid.rows, cols = config.grid.cols;

    Tensor gd({n, rows, cols, 3});
    Tensor gs;
    if (autogrids) gs = Tensor({config.grid.cells(), topology.joint_count()});
    const size_t grid_stride = static_cast<size_t>(rows) * cols * 3;
    for (int i = 0; i < n; ++i) {
        const Tensor go = slice3(grad_output, i);
        const Tensor gdi = sgt_inverse_backward(t.s_used, go);
        std::copy(gdi.v.begin(), gdi.v.end(), gd.v.begin() + static_cast<long>(grid_stride) * i);
        if (autogrids) {
            const Tensor gsi = sgt_inverse_grad_s(t.s_used, go, slice4(t.d_out, i), slice3(t.output, i));
            for (size_t e = 0; e < gs.v.size(); ++e) gs.v[e] += gsi.v[e];
        }
    }

    Tensor gx = shrink.backward(gd, t.shrink_input, t.shrink_cache);
    size_t ti = t.layer_tapes.size();
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        Tensor gskip = gx;
        gx = it->second.backward(gx, t.layer_tapes[--ti], config.dropout_p);
        gx = it->first.backward(gx, t.layer_tapes[--ti], config.dropout_p);
        for (size_t e = 0; e < gx.v.size(); ++e) gx.v[e] += gskip.v[e];
    }
    Tensor g_d0 = expand.backward(gx, t.layer_tapes[0], config.dropout_p);

    if (autogrids) {
        for (int i = 0; i < n; ++i) {
            const Tensor gsi = sgt_forward_grad_s(slice4(g_d0, i), slice3(t.input, i));
            for (size_t e = 0; e < gs.v.size(); ++e) gs.v[e] += gsi.v[e];
        }
        const Tensor g_prob = ste_backward(gs);
        autogrids->s_prob.t.ensure_grad();
        for (size_t e = 0; e < g_prob.v.size(); ++e) autogrids->s_prob.t.grad[e] += g_prob.v[e];
    }
}

std::vector<Parameter*> GLNModel::parameters() {
    std::vector<Parameter*> out;
    auto append = [&](std::vector<Parameter*> p) { out.insert(out.end(), p.begin(), p.end()); };
    append(expand.parameters());
    for (auto& b : blocks) {
        append(b.first.parameters());
        append(b.second.parameters());
    }
    append(shrink.parameters());
    if (autogrids) out.push_back(&autogrids->s_prob);
    return out;
}

int64_t GLNModel::parameter_count() const {
    int64_t total = 0;
    for (const Parameter* p : const_cast<GLNModel*>(this)->parameters()) total += p->numel();
    return total;
}

int64_t GLNModel::attention_parameter_count() const {
    int64_t total = expand.conv.attention_parameter_count() + shrink.attention_parameter_count();
    for (const auto& b : blocks)
        total += b.first.conv.attention_parameter_count() + b.second.conv.attention_parameter_count();
    return total;
}

int GLNModel::sgt_coverage() const {
    if (autogrids) {
        const AutoGridsSample s = autogrids_argmax(*autogrids);
        return s.s.joints - static_cast<int>(s.s.uncovered_joints().size());
    }
    return assignment.joints - static_cast<int>(assignment.uncovered_joints().size());
}

double gln_loss(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt) || pred.ndim() != 3 || pred.dim(2) != 3)
        throw std::invalid_argument("gln_loss: expected matching N x J x 3 tensors");
    const int n = pred.dim(0), j = pred.dim(1);
    double total = 0.0;
    for (size_t e = 0; e < pred.v.size(); ++e) {
        const double d = pred.v[e] - gt.v[e];
        total += d * d;
    }
    return total / (static_cast<double>(n) * j);
}

Tensor gln_loss_grad(const Tensor& pred, const Tensor& gt) {
    Tensor g(pred.shape);
    const double scale = 2.0 / (static_cast<double>(pred.dim(0)) * pred.dim(1));
    for (size_t e = 0; e < pred.v.size(); ++e) g.v[e] = scale * (pred.v[e] - gt.v[e]);
    return g;
}

double lr_at_epoch(SgtMode mode, double base_lr, int epoch) {
    double lr = base_lr;
    if (mode == SgtMode::Learnable) {
        for (int e = 10; e <= epoch; e += 10) lr *= 0.1;
    } else {
        for (int e = 1; e <= epoch; ++e) lr *= 0.96;
    }
    return lr;
}

Tensor predict_mm(GLNModel& model, const Dataset& data, int batch_size) {
    const int n = data.size(), joints = model.topology.joint_count();
    Tensor preds({n, joints, 3});
    Tensor batch_in({0, joints, 2});
    for (int start = 0; start < n; start += batch_size) {
        const int bs = std::min(batch_size, n - start);
        batch_in = Tensor({bs, joints, 2});
        for (int i = 0; i < bs; ++i) {
            const NormalizedSample ns = normalize_for(data.samples[static_cast<size_t>(start + i)],
                                                      model.config.normalization);
            std::copy(ns.input2d.v.begin(), ns.input2d.v.end(),
                      batch_in.v.begin() + static_cast<long>(i) * joints * 2);
        }
        const Tensor out = model.forward(batch_in, Mode::Eval, nullptr, 0, nullptr);
        for (int i = 0; i < bs; ++i) {
            Tensor pred({joints, 3});
            std::copy(out.v.begin() + static_cast<long>(i) * joints * 3,
                      out.v.begin() + static_cast<long>(i + 1) * joints * 3, pred.v.begin());
            const Tensor mm = prediction_to_mm(pred, model.config.normalization,
                                               data.samples[static_cast<size_t>(start + i)],
                                               model.topology.root_index);
            std::copy(mm.v.begin(), mm.v.end(), preds.v.begin() + static_cast<long>(start + i) * joints * 3);
        }
    }
    return preds;
}

double eval_mpjpe_mm(GLNModel& model, const Dataset& data, int batch_size) {
    const int n = data.size(), joints = model.topology.joint_count();
    const Tensor preds = predict_mm(model, data, batch_size);
    Tensor gt({n, joints, 3});
    for (int i = 0; i < n; ++i)
        std::copy(data.samples[static_cast<size_t>(i)].pose3d.v.begin(),
                  data.samples[static_cast<size_t>(i)].pose3d.v.end(),
                  gt.v.begin() + static_cast<long>(i) * joints * 3);
    return mpjpe(preds, gt);
}

TrainHistory train(GLNModel& model, const Dataset& data, const TrainHyper& hyper, Rng& rng) {
    if (!data.topology.same_joints(model.topology))
        throw std::invalid_argument("train: dataset topology does not match the model");
    const int n = data.size();
    if (n < 2) throw std::invalid_argument("train: need at least 2 samples");
    if (hyper.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
    if (model.autogrids) model.autogrids->noise_cutoff_epoch = hyper.gumbel_cutoff;

    const int joints = model.topology.joint_count();
    Tensor inputs({n, joints, 2}), targets({n, joints, 3});
    for (int i = 0; i < n; ++i) {
        const NormalizedSample ns = normalize_for(data.samples[static_cast<size_t>(i)], model.config.normalization);
        std::copy(ns.input2d.v.begin(), ns.input2d.v.end(), inputs.v.begin() + static_cast<long>(i) * joints * 2);
        std::copy(ns.target3d.v.begin(), ns.target3d.v.end(), targets.v.begin() + static_cast<long>(i) * joints * 3);
    }

    auto params = model.parameters();
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double lr = lr_at_epoch(model.config.sgt_mode, hyper.base_lr, epoch);
        const bool gumbel_active =
            model.autogrids && model.autogrids->noise_enabled && epoch < model.autogrids->noise_cutoff_epoch;
        rng.shuffle(order);

        double loss_sum = 0.0;
        int batches = 0;
        for (int start = 0, batch_index = 0; start < n; start += hyper.batch_size, ++batch_index) {
            const int bs = std::min(hyper.batch_size, n - start);
            if (bs < 2) break;  // attention batch norm needs at least 2 samples
            Tensor bx({bs, joints, 2}), by({bs, joints, 3});
            for (int i = 0; i < bs; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                std::copy(inputs.v.begin() + static_cast<long>(src) * joints * 2,
                          inputs.v.begin() + static_cast<long>(src + 1) * joints * 2,
                          bx.v.begin() + static_cast<long>(i) * joints * 2);
                std::copy(targets.v.begin() + static_cast<long>(src) * joints * 3,
                          targets.v.begin() + static_cast<long>(src + 1) * joints * 3,
                          by.v.begin() + static_cast<long>(i) * joints * 3);
            }

            GLNTape tape;
            double loss;
            try {
                const Tensor pred = model.forward(bx, Mode::Train, &rng, epoch, &tape);
                loss = gln_loss(pred, by);
                if (!std::isfinite(loss))
                    throw NumericAbort(epoch, batch_index,
                                       "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                           std::to_string(batch_index));
                for (Parameter* p : params) {
                    p->t.ensure_grad();
                    p->zero_grad();
                }
                model.backward(gln_loss_grad(pred, by), tape);
            } catch (const NumericAbort&) {
                throw;
            } catch (const std::runtime_error& err) {
                throw NumericAbort(epoch, batch_index,
                                   std::string(err.what()) + " (epoch " + std::to_string(epoch) + " batch " +
                                       std::to_string(batch_index) + ")");
            }

            AdamHyper adam;
            adam.lr = lr;
            for (Parameter* p : params) adam_update(*p, adam);
            if (model.autogrids) {
                for (double& x : model.autogrids->s_prob.t.v)
                    if (x < 1e-6) x = 1e-6;  // keep assignment scores positive
            }
            loss_sum += loss;
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.loss = batches > 0 ? loss_sum / batches : 0.0;
        stats.train_mpjpe = eval_mpjpe_mm(model, data, hyper.batch_size);
        stats.sgt_coverage = model.sgt_coverage();
        stats.gumbel_noise = gumbel_active;
        history.epochs.push_back(stats);
    }
    history.coverage_fallbacks = model.coverage_fallback_events;
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoint format (documented in README.md):
//   magic "GPCKPT01"
//   u32 json_length, UTF-8 JSON metadata (config, topology, assignment state)
//   u32 array_count, then per array:
//     u16 name_length, name bytes
//     u8 ndim, u32 dims[ndim]
//     f64 data, little-endian, row-major
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'P', 'C', 'K', 'P', 'T', '0', '1'};

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    double* data = nullptr;
    size_t size = 0;
};

struct StateRefs {
    std::vector<NamedArray> arrays;
    std::vector<std::pair<std::string, int64_t*>> steps;
};

void collect_param(StateRefs& out, const std::string& name, Parameter& p) {
    out.arrays.push_back({name, p.t.shape, p.t.v.data(), p.t.v.size()});
    out.arrays.push_back({name + ".adam_m", {static_cast<int>(p.adam_m.size())}, p.adam_m.data(), p.adam_m.size()});
    out.arrays.push_back({name + ".adam_v", {static_cast<int>(p.adam_v.size())}, p.adam_v.data(), p.adam_v.size()});
    out.steps.emplace_back(name + ".step", &p.step_count);
}

void collect_tensor(StateRefs& out, const std::string& name, Tensor& t) {
    out.arrays.push_back({name, t.shape, t.v.data(), t.v.size()});
}

void collect_conv(StateRefs& out, const std::string& prefix, DGridConvLayer& conv) {
    collect_param(out, prefix + ".branch_a.kernel", conv.branch_a.kernel);
    collect_param(out, prefix + ".branch_a.bias", conv.branch_a.bias);
    collect_param(out, prefix + ".branch_b.kernel", conv.branch_b.kernel);
    collect_param(out, prefix + ".branch_b.bias", conv.branch_b.bias);
    if (conv.attention) {
        AttentionHead& a = *conv.attention;
        collect_param(out, prefix + ".attn.bn_gamma", a.bn_gamma);
        collect_param(out, prefix + ".attn.bn_beta", a.bn_beta);
        collect_tensor(out, prefix + ".attn.run_mean", a.run_mean);
        collect_tensor(out, prefix + ".attn.run_var", a.run_var);
        collect_param(out, prefix + ".attn.fc1_w", a.fc1_w);
        collect_param(out, prefix + ".attn.fc1_b", a.fc1_b);
        collect_param(out, prefix + ".attn.fc2_w", a.fc2_w);
        collect_param(out, prefix + ".attn.fc2_b", a.fc2_b);
    }
}

void collect_layer_block(StateRefs& out, const std::string& prefix, LayerBlock& block) {
    collect_conv(out, prefix + ".conv", block.conv);
    collect_param(out, prefix + ".bn.gamma", block.bn_gamma);
    collect_param(out, prefix + ".bn.beta", block.bn_beta);
    collect_tensor(out, prefix + ".bn.run_mean", block.bn_run_mean);
    collect_tensor(out, prefix + ".bn.run_var", block.bn_run_var);
}

StateRefs collect_state(GLNModel& model) {
    StateRefs out;
    collect_layer_block(out, "expand", model.expand);
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        collect_layer_block(out, "block" + std::to_string(b) + ".first", model.blocks[b].first);
        collect_layer_block(out, "block" + std::to_string(b) + ".second", model.blocks[b].second);
    }
    collect_conv(out, "shrink", model.shrink);
    if (model.autogrids) collect_param(out, "sgt.s_prob", model.autogrids->s_prob);
    return out;
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return value;
}

void write_array(std::ofstream& out, const std::string& name, const std::vector<int>& shape,
                 const double* data, size_t size) {
    write_raw<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<long>(name.size()));
    write_raw<uint8_t>(out, static_cast<uint8_t>(shape.size()));
    for (int d : shape) write_raw<uint32_t>(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(data), static_cast<long>(size * sizeof(double)));
}

std::vector<int> assignment_cells(const AssignmentMatrix& s) {
    std::vector<int> cells(static_cast<size_t>(s.grid.cells()));
    for (int p = 0; p < s.grid.cells(); ++p) cells[static_cast<size_t>(p)] = s.joint_of_cell(p);
    return cells;
}

AssignmentMatrix assignment_from_cells(const std::vector<int>& cells, GridSpec grid, int joints) {
    AssignmentMatrix s(grid, joints);
    if (static_cast<int>(cells.size()) != grid.cells())
        throw std::runtime_error("checkpoint: assignment cell count mismatch");
    for (int p = 0; p < grid.cells(); ++p) {
        if (cells[static_cast<size_t>(p)] < 0 || cells[static_cast<size_t>(p)] >= joints)
            throw std::runtime_error("checkpoint: assignment joint index out of range");
        s.at(p, cells[static_cast<size_t>(p)]) = 1;
    }
    return s;
}

}  // namespace

void save_model(const GLNModel& model, const std::string& path) {
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["config"] = gln_config_to_json(model.config);
    meta["topology"] = topology_to_json(model.topology);
    meta["assignment_cells"] = assignment_cells(model.assignment);
    meta["last_covering_cells"] = assignment_cells(model.last_covering);
    meta["coverage_fallback_events"] = model.coverage_fallback_events;
    if (model.autogrids)
        meta["autogrids"] = nlohmann::json{{"temperature", model.autogrids->temperature},
                                           {"noise_enabled", model.autogrids->noise_enabled},
                                           {"noise_cutoff_epoch", model.autogrids->noise_cutoff_epoch}};
    const std::string json_text = meta.dump();

    StateRefs state = collect_state(const_cast<GLNModel&>(model));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_raw<uint32_t>(out, static_cast<uint32_t>(json_text.size()));
    out.write(json_text.data(), static_cast<long>(json_text.size()));
    write_raw<uint32_t>(out, static_cast<uint32_t>(state.arrays.size() + state.steps.size()));
    for (const auto& a : state.arrays) write_array(out, a.name, a.shape, a.data, a.size);
    for (const auto& [name, step] : state.steps) {
        const double value = static_cast<double>(*step);
        write_array(out, name, {1}, &value, 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

GLNModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic or unsupported version in " + path);
    const uint32_t json_len = read_raw<uint32_t>(in);
    std::string json_text(json_len, '\0');
    in.read(json_text.data(), json_len);
    if (!in) throw std::runtime_error("checkpoint: truncated metadata");
    const nlohmann::json meta = nlohmann::json::parse(json_text);
    if (meta.at("format_version").get<int>() != 1)
        throw std::runtime_error("checkpoint: unsupported format version");

    const GLNConfig config = gln_config_from_json(meta.at("config"));
    const SkeletonTopology topo = topology_from_json(meta.at("topology"));
    // Rebuild with the stored shapes; every array and the assignment state
    // are overwritten below, so the fixed-layout modes build as Random.
    GLNConfig shaped = config;
    if (shaped.sgt_mode != SgtMode::Learnable) shaped.sgt_mode = SgtMode::Random;
    GLNModel model = build_gln(shaped, topo);
    model.config = config;
    model.assignment = assignment_from_cells(meta.at("assignment_cells").get<std::vector<int>>(), config.grid,
                                             topo.joint_count());
    model.last_covering = assignment_from_cells(meta.at("last_covering_cells").get<std::vector<int>>(),
                                                config.grid, topo.joint_count());
    model.coverage_fallback_events = meta.value("coverage_fallback_events", 0);
    if (model.autogrids && meta.contains("autogrids")) {
        model.autogrids->temperature = meta["autogrids"].value("temperature", 1.0);
        model.autogrids->noise_enabled = meta["autogrids"].value("noise_enabled", true);
        model.autogrids->noise_cutoff_epoch = meta["autogrids"].value("noise_cutoff_epoch", 30);
    }

    StateRefs state = collect_state(model);
    const uint32_t count = read_raw<uint32_t>(in);
    if (count != state.arrays.size() + state.steps.size())
        throw std::runtime_error("checkpoint: array count mismatch (config/model incompatibility)");

    size_t array_idx = 0, step_idx = 0;
    for (uint32_t rec = 0; rec < count; ++rec) {
        const uint16_t name_len = read_raw<uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint8_t ndim = read_raw<uint8_t>(in);
        std::vector<int> shape(ndim);
        size_t size = 1;
        for (int d = 0; d < ndim; ++d) {
            shape[static_cast<size_t>(d)] = static_cast<int>(read_raw<uint32_t>(in));
            size *= static_cast<size_t>(shape[static_cast<size_t>(d)]);
        }
        std::vector<double> data(size);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<long>(size * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated array " + name);

        if (array_idx < state.arrays.size()) {
            NamedArray& expect = state.arrays[array_idx];
            if (expect.name != name || expect.shape != shape)
                throw std::runtime_error("checkpoint: array '" + name + "' does not match expected '" +
                                         expect.name + "' " + shape_str(expect.shape));
            std::copy(data.begin(), data.end(), expect.data);
            ++array_idx;
        } else {
            auto& [expect_name, step_ptr] = state.steps[step_idx];
            if (expect_name != name || size != 1)
                throw std::runtime_error("checkpoint: step record '" + name + "' does not match '" + expect_name + "'");
            *step_ptr = static_cast<int64_t>(data[0]);
            ++step_idx;
        }
    }
    return model;
}

}  // namespace gridpose
