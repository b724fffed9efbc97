#include "gridpose/selfcheck.hpp"

#include <cmath>
#include <functional>

#include "gridpose/csv.hpp"
#include "gridpose/gln.hpp"

namespace gridpose::selfcheck {

namespace {

constexpr double kFdStep = 1e-5;

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

double weighted_sum(const Tensor& t, const Tensor& w) {
    double acc = 0.0;
    for (size_t i = 0; i < t.v.size(); ++i) acc += t.v[i] * w.v[i];
    return acc;
}

/// Max relative error between an analytic gradient and central differences
/// of a scalar function over the entries of `values`.
double fd_max_err(std::vector<double>& values, const std::vector<double>& analytic,
                  const std::function<double()>& eval) {
    double worst = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + kFdStep;
        const double up = eval();
        values[i] = keep - kFdStep;
        const double down = eval();
        values[i] = keep;
        const double fd = (up - down) / (2.0 * kFdStep);
        worst = std::max(worst, rel_err(analytic[i], fd));
    }
    return worst;
}

Check make_check(const std::string& name, double err, double tol) {
    return {name, err <= tol, "max err " + csv::fmt(err) + " (tol " + csv::fmt(tol) + ")"};
}

// ---------------------------------------------------------------- gradcheck

Check check_conv_grads() {
    Rng rng(11);
    Tensor x = random_tensor({5, 6, 2}, rng);
    Tensor k = random_tensor({3, 3, 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor w = random_tensor({3, 4, 3}, rng);
    auto loss = [&] { return weighted_sum(conv2d(x, k, b), w); };
    const Conv2dGrads g = conv2d_backward(w, x, k);
    double err = fd_max_err(x.v, g.input.v, loss);
    err = std::max(err, fd_max_err(k.v, g.kernel.v, loss));
    err = std::max(err, fd_max_err(b.v, g.bias.v, loss));
    return make_check("conv2d backward vs finite differences", err, 1e-6);
}

Check check_pad_grads() {
    Rng rng(12);
    double err = 0.0;
    for (PadMode mode : {PadMode::Circular, PadMode::Replicate}) {
        Tensor x = random_tensor({4, 5, 2}, rng);
        Tensor w = random_tensor({6, 7, 2}, rng);
        auto loss = [&] { return weighted_sum(pad_grid(x, 1, mode), w); };
        const Tensor g = pad_grid_backward(w, 4, 5, 1, mode, mode);
        err = std::max(err, fd_max_err(x.v, g.v, loss));
    }
    return make_check("pad_grid backward vs finite differences", err, 1e-6);
}

Check check_batchnorm_grads() {
    Rng rng(13);
    Tensor x = random_tensor({6, 4}, rng);
    Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({4}, rng);
    Tensor w = random_tensor({6, 4}, rng);
    Tensor rm({4}), rv = Tensor::full({4}, 1.0);
    BatchNormCache cache;
    auto loss = [&] {
        Tensor m({4}), v = Tensor::full({4}, 1.0);  // keep running stats untouched for the FD
        return weighted_sum(batch_norm(x, gamma, beta, m, v, Mode::Train, kBnMomentum, kBnEps, nullptr), w);
    };
    batch_norm(x, gamma, beta, rm, rv, Mode::Train, kBnMomentum, kBnEps, &cache);
    const BatchNormGrads g = batch_norm_backward(w, cache, gamma);
    double err = fd_max_err(x.v, g.x.v, loss);
    err = std::max(err, fd_max_err(gamma.v, g.gamma.v, loss));
    err = std::max(err, fd_max_err(beta.v, g.beta.v, loss));
    return make_check("batch_norm backward vs finite differences", err, 1e-5);
}

Check check_activation_grads() {
    Rng rng(14);
    double err = 0.0;
    for (Act kind : {Act::Relu, Act::Sigmoid}) {
        Tensor x = random_tensor({40}, rng, -2.0, 2.0);
        Tensor w = random_tensor({40}, rng);
        auto loss = [&] { return weighted_sum(activation(x, kind), w); };
        const Tensor y = activation(x, kind);
        const Tensor g = activation_backward(w, y, kind);
        err = std::max(err, fd_max_err(x.v, g.v, loss));
    }
    return make_check("activation backward vs finite differences", err, 1e-7);
}

Check check_affine_gap_grads() {
    Rng rng(15);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor wgt = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    auto loss = [&] { return weighted_sum(affine(x, wgt, b), w); };
    const AffineGrads g = affine_backward(w, x, wgt);
    double err = fd_max_err(x.v, g.x.v, loss);
    err = std::max(err, fd_max_err(wgt.v, g.weight.v, loss));
    err = std::max(err, fd_max_err(b.v, g.bias.v, loss));

    Tensor grid = random_tensor({4, 3, 2}, rng);
    Tensor wg = random_tensor({2}, rng);
    auto gap_loss = [&] { return weighted_sum(global_average_pool(grid), wg); };
    const Tensor gg = global_average_pool_backward(wg, 4, 3);
    err = std::max(err, fd_max_err(grid.v, gg.v, gap_loss));
    return make_check("affine/global_average_pool backward vs finite differences", err, 1e-6);
}

Check check_dgridconv_grads() {
    Rng rng(16);
    LayerShape sh{3, 3, 4, 4, 5, true};
    DGridConvLayer layer = make_dgridconv(sh, rng);
    Tensor x = random_tensor({3, sh.rows, sh.cols, sh.cin}, rng);
    Tensor w = random_tensor({3, sh.rows, sh.cols, sh.cout}, rng);
    auto loss = [&] { return weighted_sum(layer.forward(x, Mode::Train, nullptr), w); };

    DGridConvLayer::Cache cache;
    layer.forward(x, Mode::Train, &cache);
    for (Parameter* p : layer.parameters()) {
        p->t.ensure_grad();
        p->zero_grad();
    }
    const Tensor gx = layer.backward(w, x, cache);

    double err = fd_max_err(x.v, gx.v, loss);
    for (Parameter* p : layer.parameters()) err = std::max(err, fd_max_err(p->t.v, p->t.grad, loss));
    return make_check("dgridconv backward vs finite differences", err, 1e-4);
}

Check check_tiny_gln_grads() {
    GLNConfig config;
    config.latent_channels = 8;
    config.blocks = 1;
    config.kernel_plan = "3-33-3";
    config.dropout_p = 0.0;
    config.seed = 40;
    const SkeletonTopology topo = canonical_h36m17();
    GLNModel model = build_gln(config, topo);

    Rng rng(41);
    Tensor input = random_tensor({4, topo.joint_count(), 2}, rng);
    Tensor target = random_tensor({4, topo.joint_count(), 3}, rng);
    auto loss = [&] { return gln_loss(model.forward(input, Mode::Train, nullptr, 0, nullptr), target); };

    GLNTape tape;
    const Tensor pred = model.forward(input, Mode::Train, nullptr, 0, &tape);
    for (Parameter* p : model.parameters()) {
        p->t.ensure_grad();
        p->zero_grad();
    }
    model.backward(gln_loss_grad(pred, target), tape);

    double err = 0.0;
    for (Parameter* p : model.parameters()) err = std::max(err, fd_max_err(p->t.v, p->t.grad, loss));
    return make_check("tiny end-to-end network vs finite differences", err, 1e-4);
}

// ------------------------------------------------------------------- oracle

Check check_conv_oracle() {
    Rng rng(21);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int k = 1 + 2 * rng.uniform_int(2);
        const int hp = k + rng.uniform_int(4), wp = k + rng.uniform_int(4);
        const int cin = 1 + rng.uniform_int(3), cout = 1 + rng.uniform_int(3);
        Tensor x = random_tensor({hp, wp, cin}, rng);
        Tensor ker = random_tensor({k, k, cin, cout}, rng);
        Tensor b = random_tensor({cout}, rng);
        const Tensor out = conv2d(x, ker, b);
        for (int i = 0; i < out.dim(0); ++i)
            for (int j = 0; j < out.dim(1); ++j)
                for (int co = 0; co < cout; ++co) {
                    double acc = b.v[static_cast<size_t>(co)];
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj)
                            for (int ci = 0; ci < cin; ++ci)
                                acc += x.at(i + ki, j + kj, ci) * ker.at(ki, kj, ci, co);
                    worst = std::max(worst, std::abs(acc - out.at(i, j, co)));
                }
    }
    return make_check("conv2d vs direct-sum oracle", worst, 1e-12);
}

Check check_pad_oracle() {
    Rng rng(22);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int h = 2 + rng.uniform_int(4), p = 2 + rng.uniform_int(4), c = 1 + rng.uniform_int(2);
        const int s = 1 + rng.uniform_int(std::min(h, p) - 1);
        Tensor x = random_tensor({h, p, c}, rng);
        const Tensor circ = pad_grid(x, s, PadMode::Circular);
        const Tensor repl = pad_grid(x, s, PadMode::Replicate);
        for (int i = 0; i < h + 2 * s; ++i)
            for (int j = 0; j < p + 2 * s; ++j)
                for (int ch = 0; ch < c; ++ch) {
                    const int wi = ((i - s) % h + h) % h;
                    const int wj = ((j - s) % p + p) % p;
                    worst = std::max(worst, std::abs(circ.at(i, j, ch) - x.at(wi, wj, ch)));
                    const int ri = std::clamp(i - s, 0, h - 1);
                    const int rj = std::clamp(j - s, 0, p - 1);
                    worst = std::max(worst, std::abs(repl.at(i, j, ch) - x.at(ri, rj, ch)));
                }
    }
    return make_check("pad_grid vs index-map oracle", worst, 0.0);
}

Check check_gridconv_oracle() {
    Rng rng(23);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        LayerShape sh{3, 1 + rng.uniform_int(3), 1 + rng.uniform_int(3), 3 + rng.uniform_int(3),
                      3 + rng.uniform_int(3), false};
        DGridConvLayer layer = make_dgridconv(sh, rng);
        Tensor x = random_tensor({sh.rows, sh.cols, sh.cin}, rng);
        const Tensor out = gridconv_forward(layer, x);
        const Tensor oracle_a = conv2d(pad_grid(x, sh.pad(), PadMode::Circular), layer.branch_a.kernel.t,
                                       layer.branch_a.bias.t);
        const Tensor oracle_b = conv2d(pad_grid(x, sh.pad(), PadMode::Replicate), layer.branch_b.kernel.t,
                                       layer.branch_b.bias.t);
        for (size_t e = 0; e < out.v.size(); ++e)
            worst = std::max(worst, std::abs(out.v[e] - (oracle_a.v[e] + oracle_b.v[e])));
    }
    return make_check("gridconv vs pad-then-conv oracle", worst, 1e-12);
}

Check check_dgridconv_oracle() {
    Rng rng(24);
    double worst = 0.0;
    for (int rep = 0; rep < 30; ++rep) {
        LayerShape sh{3, 1 + rng.uniform_int(3), 1 + rng.uniform_int(3), 3 + rng.uniform_int(2),
                      3 + rng.uniform_int(2), true};
        DGridConvLayer layer = make_dgridconv(sh, rng);
        Tensor x = random_tensor({sh.rows, sh.cols, sh.cin}, rng);
        const Tensor out = dgridconv_forward(layer, x, Mode::Eval);
        const Tensor alpha = attention_forward(layer, x, Mode::Eval);
        const Tensor pa = pad_grid(x, sh.pad(), PadMode::Circular);
        const Tensor pb = pad_grid(x, sh.pad(), PadMode::Replicate);
        for (int i = 0; i < sh.rows; ++i)
            for (int j = 0; j < sh.cols; ++j) {
                const Tensor patch_a = extract_patch(pa, i, j, sh.kernel);
                const Tensor patch_b = extract_patch(pb, i, j, sh.kernel);
                for (int co = 0; co < sh.cout; ++co) {
                    double acc = layer.branch_a.bias.t.v[static_cast<size_t>(co)] +
                                 layer.branch_b.bias.t.v[static_cast<size_t>(co)];
                    for (int ki = 0; ki < sh.kernel; ++ki)
                        for (int kj = 0; kj < sh.kernel; ++kj)
                            for (int ci = 0; ci < sh.cin; ++ci)
                                acc += alpha.at(i, j, ki, kj) *
                                       (layer.branch_a.kernel.t.at(ki, kj, ci, co) * patch_a.at(ki, kj, ci) +
                                        layer.branch_b.kernel.t.at(ki, kj, ci, co) * patch_b.at(ki, kj, ci));
                    worst = std::max(worst, std::abs(acc - out.at(i, j, co)));
                }
            }
    }
    return make_check("dgridconv vs per-patch scaled-kernel oracle", worst, 1e-10);
}

// ---------------------------------------------------------------- roundtrip

Check check_handcrafted_layout() {
    const SkeletonTopology topo = canonical_h36m17();
    const AssignmentMatrix s = build_handcrafted_layout(topo, GridSpec{5, 5});
    const ConstraintReport report = validate_constraints(s, topo);
    const auto [ar, ac] = handcrafted_anchor_cell();
    const bool anchor_ok = s.at(s.cell_index(ar, ac), topo.root_index) == 1;
    const bool ok = report.ok() && anchor_ok && s.covering();
    return {"handcrafted layout satisfies both constraints", ok,
            report.ok() ? "0 violations" : std::to_string(report.violations.size()) + " violations"};
}

Check check_sgt_roundtrip() {
    Rng rng(31);
    const SkeletonTopology topo = canonical_h36m17();
    for (int rep = 0; rep < 200; ++rep) {
        const AssignmentMatrix s = random_sgt(topo, GridSpec{5, 5}, rng);
        const Tensor g = random_tensor({topo.joint_count(), 3}, rng);
        const Tensor back = sgt_inverse(s, sgt_forward(s, g));
        if (back.v != g.v) return {"sgt round trip is exact", false, "mismatch at repetition " + std::to_string(rep)};
    }
    return {"sgt round trip is exact", true, "200 random covering assignments"};
}

Check check_replica_mean() {
    SkeletonTopology topo;
    topo.joint_names = {"a", "b"};
    topo.edges = {{0, 1}};
    topo.root_index = 0;
    AssignmentMatrix s(GridSpec{1, 3}, 2);
    s.at(0, 0) = 1;
    s.at(1, 1) = 1;
    s.at(2, 1) = 1;
    Tensor d({1, 3, 1});
    d.v = {5.0, 2.0, 4.0};
    const Tensor g = sgt_inverse(s, d);
    const bool ok = g.at(0, 0) == 5.0 && g.at(1, 0) == 3.0;
    return {"replica proposals average to the mean", ok, "(2,4) -> " + csv::fmt(g.at(1, 0))};
}

Check check_inverse_matrix_oracle() {
    Rng rng(32);
    const SkeletonTopology topo = canonical_h36m17();
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const AssignmentMatrix s = random_sgt(topo, GridSpec{5, 5}, rng);
        const Tensor d = random_tensor({5, 5, 3}, rng);
        const Tensor g = sgt_inverse(s, d);
        const auto counts = s.joint_counts();
        for (int j = 0; j < s.joints; ++j)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int p = 0; p < s.grid.cells(); ++p)
                    if (s.at(p, j)) acc += d.v[static_cast<size_t>(p) * 3 + c];
                worst = std::max(worst, std::abs(acc / counts[static_cast<size_t>(j)] - g.at(j, c)));
            }
    }
    return make_check("sgt_inverse vs normalized-transpose oracle", worst, 1e-12);
}

Check check_reprojection_consistency() {
    const SkeletonTopology topo = canonical_h36m17();
    const CameraModel base;
    const Dataset data = synth_generate(100, topo, base, 34);
    double worst = 0.0;
    for (const auto& sample : data.samples) {
        const auto& cam = *sample.camera;
        const double zr = cam.root_depth;
        const double xr = (sample.pose2d.at(topo.root_index, 0) - cam.cx) * zr / cam.fx;
        const double yr = (sample.pose2d.at(topo.root_index, 1) - cam.cy) * zr / cam.fy;
        Tensor cam_pose({topo.joint_count(), 3});
        for (int j = 0; j < topo.joint_count(); ++j) {
            cam_pose.at(j, 0) = sample.pose3d.at(j, 0) + xr;
            cam_pose.at(j, 1) = sample.pose3d.at(j, 1) + yr;
            cam_pose.at(j, 2) = sample.pose3d.at(j, 2) + zr;
        }
        const Tensor px = project(cam, cam_pose);
        for (size_t e = 0; e < px.v.size(); ++e) worst = std::max(worst, std::abs(px.v[e] - sample.pose2d.v[e]));
    }
    return make_check("synthetic data reprojection consistency", worst, 1e-6);
}

Check check_autogrids_argmax() {
    Rng rng(33);
    AutoGridsState state = init_autogrids(nullptr, GridSpec{3, 3}, 5, rng);
    const AutoGridsSample a = autogrids_argmax(state);
    const AutoGridsSample b = autogrids_argmax(state);
    bool ok = a.s == b.s;
    for (int p = 0; p < 9 && ok; ++p) {
        int best = 0;
        for (int j = 1; j < 5; ++j)
            if (state.s_prob.t.at(p, j) > state.s_prob.t.at(p, best)) best = j;
        ok = a.s.at(p, best) == 1;
    }
    return {"autogrids noise-free sampling equals row argmax", ok, ok ? "deterministic" : "mismatch"};
}

std::vector<Check> gradcheck_suite() {
    return {check_conv_grads(),      check_pad_grads(),        check_batchnorm_grads(),
            check_activation_grads(), check_affine_gap_grads(), check_dgridconv_grads(),
            check_tiny_gln_grads()};
}

std::vector<Check> oracle_suite() {
    return {check_conv_oracle(), check_pad_oracle(), check_gridconv_oracle(), check_dgridconv_oracle()};
}

std::vector<Check> roundtrip_suite() {
    return {check_handcrafted_layout(), check_sgt_roundtrip(), check_replica_mean(),
            check_inverse_matrix_oracle(), check_autogrids_argmax(), check_reprojection_consistency()};
}

}  // namespace

std::vector<Check> run_suite(const std::string& suite) {
    if (suite == "gradcheck") return gradcheck_suite();
    if (suite == "oracle") return oracle_suite();
    if (suite == "roundtrip") return roundtrip_suite();
    if (suite == "all") {
        std::vector<Check> all = roundtrip_suite();
        auto o = oracle_suite();
        all.insert(all.end(), o.begin(), o.end());
        auto g = gradcheck_suite();
        all.insert(all.end(), g.begin(), g.end());
        return all;
    }
    throw std::invalid_argument("unknown suite '" + suite + "' (expected gradcheck|oracle|roundtrip|all)");
}

}  // namespace gridpose::selfcheck
