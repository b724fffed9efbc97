#include <doctest.h>

#include "gridpose/gridconv.hpp"
#include "test_support.hpp"

using namespace gridpose;
using namespace gridpose::testing;

namespace {

DGridConvLayer make_layer(int kernel, int cin, int cout, int rows, int cols, bool dynamic, uint64_t seed) {
    Rng rng(seed);
    return make_dgridconv(LayerShape{kernel, cin, cout, rows, cols, dynamic}, rng);
}

void fill(Tensor& t, double value) { std::fill(t.v.begin(), t.v.end(), value); }

}  // namespace

TEST_CASE("gridconv with zero kernels returns the summed biases") {
    DGridConvLayer layer = make_layer(3, 2, 3, 5, 5, false, 1);
    fill(layer.branch_a.kernel.t, 0.0);
    fill(layer.branch_b.kernel.t, 0.0);
    layer.branch_a.bias.t.v = {0.5, -1.0, 2.0};
    layer.branch_b.bias.t.v = {0.25, 1.0, -3.0};
    Rng rng(2);
    const Tensor out = gridconv_forward(layer, random_tensor({5, 5, 2}, rng));
    for (int p = 0; p < 25; ++p) {
        CHECK(out.v[static_cast<size_t>(p) * 3 + 0] == 0.75);
        CHECK(out.v[static_cast<size_t>(p) * 3 + 1] == 0.0);
        CHECK(out.v[static_cast<size_t>(p) * 3 + 2] == -1.0);
    }
}

TEST_CASE("gridconv with identity 1x1 kernels doubles the input") {
    DGridConvLayer layer = make_layer(1, 2, 2, 4, 4, false, 3);
    fill(layer.branch_a.kernel.t, 0.0);
    fill(layer.branch_b.kernel.t, 0.0);
    for (int c = 0; c < 2; ++c) {
        layer.branch_a.kernel.t.at(0, 0, c, c) = 1.0;
        layer.branch_b.kernel.t.at(0, 0, c, c) = 1.0;
    }
    fill(layer.branch_a.bias.t, 0.0);
    fill(layer.branch_b.bias.t, 0.0);
    Rng rng(4);
    const Tensor x = random_tensor({4, 4, 2}, rng);
    const Tensor out = gridconv_forward(layer, x);
    for (size_t e = 0; e < x.v.size(); ++e) CHECK(out.v[e] == doctest::Approx(2.0 * x.v[e]));
}

TEST_CASE("gridconv matches the pad-then-conv oracle and keeps spatial size") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const int rows = 3 + rng.uniform_int(3), cols = 3 + rng.uniform_int(3);
        DGridConvLayer layer = make_layer(3, 1 + rng.uniform_int(3), 1 + rng.uniform_int(3), rows, cols,
                                          false, 100 + static_cast<uint64_t>(rep));
        const Tensor x = random_tensor({rows, cols, layer.shape.cin}, rng);
        const Tensor out = gridconv_forward(layer, x);
        CHECK(out.dim(0) == rows);
        CHECK(out.dim(1) == cols);
        const Tensor a = conv2d(pad_grid(x, 1, PadMode::Circular), layer.branch_a.kernel.t, layer.branch_a.bias.t);
        const Tensor b = conv2d(pad_grid(x, 1, PadMode::Replicate), layer.branch_b.kernel.t, layer.branch_b.bias.t);
        for (size_t e = 0; e < out.v.size(); ++e) CHECK_NEAR(out.v[e], a.v[e] + b.v[e], 1e-12);
    }
}

TEST_CASE("gridconv zero input yields pure-bias output") {
    DGridConvLayer layer = make_layer(3, 2, 4, 5, 5, false, 6);
    const Tensor out = gridconv_forward(layer, Tensor({5, 5, 2}));
    for (int p = 0; p < 25; ++p)
        for (int c = 0; c < 4; ++c)
            CHECK(out.v[static_cast<size_t>(p) * 4 + c] ==
                  doctest::Approx(layer.branch_a.bias.t.v[static_cast<size_t>(c)] +
                                  layer.branch_b.bias.t.v[static_cast<size_t>(c)]));
}

TEST_CASE("the circular branch alone is equivariant to cyclic shifts") {
    DGridConvLayer layer = make_layer(3, 2, 2, 5, 5, false, 7);
    fill(layer.branch_b.kernel.t, 0.0);
    fill(layer.branch_b.bias.t, 0.0);
    layer.branch_b.rows_mode = PadMode::Circular;  // dead branch; keep modes equal anyway
    layer.branch_b.cols_mode = PadMode::Circular;
    Rng rng(8);
    const Tensor x = random_tensor({5, 5, 2}, rng);
    Tensor shifted({5, 5, 2});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 2; ++c) shifted.at(i, j, c) = x.at(i, (j + 1) % 5, c);
    const Tensor base = gridconv_forward(layer, x);
    const Tensor moved = gridconv_forward(layer, shifted);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 2; ++c) CHECK_NEAR(moved.at(i, j, c), base.at(i, (j + 1) % 5, c), 1e-12);
}

TEST_CASE("attention output is sigmoid-bounded and 0.5 for a zeroed fc2") {
    DGridConvLayer layer = make_layer(3, 3, 4, 5, 5, true, 9);
    Rng rng(10);
    const Tensor x = random_tensor({5, 5, 3}, rng);
    Tensor alpha = attention_forward(layer, x);
    CHECK(alpha.shape == std::vector<int>{5, 5, 3, 3});
    for (double a : alpha.v) {
        CHECK(a > 0.0);
        CHECK(a < 1.0);
    }
    fill(layer.attention->fc2_w.t, 0.0);
    fill(layer.attention->fc2_b.t, 0.0);
    alpha = attention_forward(layer, x);
    for (double a : alpha.v) CHECK(a == 0.5);
}

TEST_CASE("attention matches the primitive composition") {
    DGridConvLayer layer = make_layer(3, 4, 2, 4, 5, true, 11);
    Rng rng(12);
    const Tensor x = random_tensor({4, 5, 4}, rng);
    const Tensor alpha = attention_forward(layer, x, Mode::Eval);

    const AttentionHead& head = *layer.attention;
    Tensor pooled({1, 4});
    pooled.v = global_average_pool(x).v;
    Tensor rm = head.run_mean, rv = head.run_var;
    const Tensor bn = batch_norm(pooled, head.bn_gamma.t, head.bn_beta.t, rm, rv, Mode::Eval, kBnMomentum,
                                 kBnEps, nullptr);
    const Tensor r1 = activation(bn, Act::Relu);
    const Tensor h = affine(r1, head.fc1_w.t, head.fc1_b.t);
    const Tensor r2 = activation(h, Act::Relu);
    const Tensor logits = affine(r2, head.fc2_w.t, head.fc2_b.t);
    const Tensor expected = activation(logits, Act::Sigmoid);
    for (size_t e = 0; e < alpha.v.size(); ++e) CHECK_NEAR(alpha.v[e], expected.v[e], 1e-12);
}

TEST_CASE("saturated attention reproduces vanilla gridconv") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        DGridConvLayer layer = make_layer(3, 1 + rng.uniform_int(3), 1 + rng.uniform_int(3), 5, 5, true,
                                          200 + static_cast<uint64_t>(rep));
        fill(layer.attention->fc2_w.t, 0.0);
        fill(layer.attention->fc2_b.t, 40.0);  // sigmoid(40) == 1 to machine precision
        const Tensor x = random_tensor({5, 5, layer.shape.cin}, rng);
        const Tensor dynamic = dgridconv_forward(layer, x);
        const Tensor vanilla = gridconv_forward(layer, x);
        for (size_t e = 0; e < dynamic.v.size(); ++e) CHECK_NEAR(dynamic.v[e], vanilla.v[e], 1e-6);

        fill(layer.attention->fc2_b.t, -40.0);  // alpha == 0: bias-only output
        const Tensor suppressed = dgridconv_forward(layer, x);
        for (int p = 0; p < 25; ++p)
            for (int c = 0; c < layer.shape.cout; ++c)
                CHECK_NEAR(suppressed.v[static_cast<size_t>(p) * layer.shape.cout + c],
                           layer.branch_a.bias.t.v[static_cast<size_t>(c)] +
                               layer.branch_b.bias.t.v[static_cast<size_t>(c)],
                           1e-6);
    }
}

TEST_CASE("saturated attention also reproduces vanilla kernel gradients") {
    DGridConvLayer dyn = make_layer(3, 2, 3, 5, 5, true, 40);
    fill(dyn.attention->fc2_w.t, 0.0);
    fill(dyn.attention->fc2_b.t, 40.0);
    DGridConvLayer van = make_layer(3, 2, 3, 5, 5, false, 41);
    van.branch_a.kernel.t.v = dyn.branch_a.kernel.t.v;
    van.branch_a.bias.t.v = dyn.branch_a.bias.t.v;
    van.branch_b.kernel.t.v = dyn.branch_b.kernel.t.v;
    van.branch_b.bias.t.v = dyn.branch_b.bias.t.v;

    Rng rng(42);
    const Tensor x = random_tensor({2, 5, 5, 2}, rng);
    const Tensor gout = random_tensor({2, 5, 5, 3}, rng);
    for (DGridConvLayer* layer : {&dyn, &van}) {
        DGridConvLayer::Cache cache;
        layer->forward(x, Mode::Eval, &cache);
        for (Parameter* p : layer->parameters()) {
            p->t.ensure_grad();
            p->zero_grad();
        }
        layer->backward(gout, x, cache);
    }
    for (size_t e = 0; e < van.branch_a.kernel.t.grad.size(); ++e) {
        CHECK_NEAR(dyn.branch_a.kernel.t.grad[e], van.branch_a.kernel.t.grad[e], 1e-10);
        CHECK_NEAR(dyn.branch_b.kernel.t.grad[e], van.branch_b.kernel.t.grad[e], 1e-10);
    }
    for (size_t e = 0; e < van.branch_a.bias.t.grad.size(); ++e)
        CHECK_NEAR(dyn.branch_a.bias.t.grad[e], van.branch_a.bias.t.grad[e], 1e-10);
}

TEST_CASE("dgridconv matches the per-patch scaled-kernel oracle") {
    Rng rng(14);
    for (int rep = 0; rep < 20; ++rep) {
        DGridConvLayer layer = make_layer(3, 1 + rng.uniform_int(2), 1 + rng.uniform_int(2), 4, 4, true,
                                          300 + static_cast<uint64_t>(rep));
        const auto& sh = layer.shape;
        const Tensor x = random_tensor({sh.rows, sh.cols, sh.cin}, rng);
        const Tensor out = dgridconv_forward(layer, x);
        const Tensor alpha = attention_forward(layer, x);
        const Tensor pa = pad_grid(x, 1, PadMode::Circular);
        const Tensor pb = pad_grid(x, 1, PadMode::Replicate);
        for (int i = 0; i < sh.rows; ++i)
            for (int j = 0; j < sh.cols; ++j) {
                const Tensor patch_a = extract_patch(pa, i, j, 3);
                const Tensor patch_b = extract_patch(pb, i, j, 3);
                for (int co = 0; co < sh.cout; ++co) {
                    double acc = layer.branch_a.bias.t.v[static_cast<size_t>(co)] +
                                 layer.branch_b.bias.t.v[static_cast<size_t>(co)];
                    for (int ki = 0; ki < 3; ++ki)
                        for (int kj = 0; kj < 3; ++kj)
                            for (int ci = 0; ci < sh.cin; ++ci)
                                acc += alpha.at(i, j, ki, kj) *
                                       (layer.branch_a.kernel.t.at(ki, kj, ci, co) * patch_a.at(ki, kj, ci) +
                                        layer.branch_b.kernel.t.at(ki, kj, ci, co) * patch_b.at(ki, kj, ci));
                    CHECK_NEAR(out.at(i, j, co), acc, 1e-10);
                }
            }
    }
}

TEST_CASE("batched forward equals the per-sample path in eval mode") {
    DGridConvLayer layer = make_layer(3, 3, 4, 5, 5, true, 15);
    Rng rng(16);
    const int n = 6;
    Tensor batch = random_tensor({n, 5, 5, 3}, rng);
    const Tensor out = layer.forward(batch, Mode::Eval, nullptr);
    for (int i = 0; i < n; ++i) {
        Tensor xi({5, 5, 3});
        std::copy(batch.v.begin() + static_cast<long>(i) * 75, batch.v.begin() + static_cast<long>(i + 1) * 75,
                  xi.v.begin());
        const Tensor yi = dgridconv_forward(layer, xi, Mode::Eval);
        for (int e = 0; e < 100; ++e)
            CHECK(out.v[static_cast<size_t>(i) * 100 + static_cast<size_t>(e)] == yi.v[static_cast<size_t>(e)]);
    }
}

TEST_CASE("layer backward: zero grad_out gives zero gradients") {
    DGridConvLayer layer = make_layer(3, 2, 3, 4, 4, true, 17);
    Rng rng(18);
    const Tensor x = random_tensor({2, 4, 4, 2}, rng);
    DGridConvLayer::Cache cache;
    layer.forward(x, Mode::Train, &cache);
    for (Parameter* p : layer.parameters()) {
        p->t.ensure_grad();
        p->zero_grad();
    }
    const Tensor gx = layer.backward(Tensor({2, 4, 4, 3}), x, cache);
    for (double v : gx.v) CHECK(v == 0.0);
    for (Parameter* p : layer.parameters())
        for (double g : p->t.grad) CHECK(g == 0.0);
}

TEST_CASE("static-layer backward matches the conv2d_backward composition") {
    DGridConvLayer layer = make_layer(3, 2, 3, 4, 5, false, 19);
    Rng rng(20);
    const Tensor x = random_tensor({1, 4, 5, 2}, rng);
    Tensor xi({4, 5, 2});
    xi.v = x.v;
    const Tensor gout_b = random_tensor({1, 4, 5, 3}, rng);
    Tensor gout({4, 5, 3});
    gout.v = gout_b.v;

    DGridConvLayer::Cache cache;
    layer.forward(x, Mode::Eval, &cache);
    for (Parameter* p : layer.parameters()) {
        p->t.ensure_grad();
        p->zero_grad();
    }
    const Tensor gx = layer.backward(gout_b, x, cache);

    const Tensor pad_a = pad_grid(xi, 1, PadMode::Circular);
    const Tensor pad_b = pad_grid(xi, 1, PadMode::Replicate);
    const Conv2dGrads ga = conv2d_backward(gout, pad_a, layer.branch_a.kernel.t);
    const Conv2dGrads gb = conv2d_backward(gout, pad_b, layer.branch_b.kernel.t);
    const Tensor gxa = pad_grid_backward(ga.input, 4, 5, 1, PadMode::Circular, PadMode::Circular);
    const Tensor gxb = pad_grid_backward(gb.input, 4, 5, 1, PadMode::Replicate, PadMode::Replicate);
    for (size_t e = 0; e < gxa.v.size(); ++e) CHECK_NEAR(gx.v[e], gxa.v[e] + gxb.v[e], 1e-12);
    for (size_t e = 0; e < ga.kernel.v.size(); ++e) {
        CHECK_NEAR(layer.branch_a.kernel.t.grad[e], ga.kernel.v[e], 1e-12);
        CHECK_NEAR(layer.branch_b.kernel.t.grad[e], gb.kernel.v[e], 1e-12);
    }
    for (size_t e = 0; e < ga.bias.v.size(); ++e) {
        CHECK_NEAR(layer.branch_a.bias.t.grad[e], ga.bias.v[e], 1e-12);
        CHECK_NEAR(layer.branch_b.bias.t.grad[e], gb.bias.v[e], 1e-12);
    }
}

TEST_CASE("dynamic layer backward matches finite differences") {
    DGridConvLayer layer = make_layer(3, 2, 3, 4, 4, true, 21);
    Rng rng(22);
    Tensor x = random_tensor({3, 4, 4, 2}, rng);
    const Tensor w = random_tensor({3, 4, 4, 3}, rng);
    auto loss = [&] { return weighted_sum(layer.forward(x, Mode::Train, nullptr), w); };

    DGridConvLayer::Cache cache;
    layer.forward(x, Mode::Train, &cache);
    for (Parameter* p : layer.parameters()) {
        p->t.ensure_grad();
        p->zero_grad();
    }
    const Tensor gx = layer.backward(w, x, cache);
    CHECK(fd_max_rel_err(x.v, gx.v, loss) <= 1e-4);
    for (Parameter* p : layer.parameters()) CHECK(fd_max_rel_err(p->t.v, p->t.grad, loss) <= 1e-4);
}

TEST_CASE("layer shape errors are rejected") {
    DGridConvLayer layer = make_layer(3, 2, 3, 4, 4, false, 23);
    CHECK_THROWS_AS(layer.forward(Tensor({2, 4, 4, 3}), Mode::Eval), std::invalid_argument);
    CHECK_THROWS_AS(gridconv_forward(layer, Tensor({4, 4})), std::invalid_argument);
    Rng rng(24);
    CHECK_THROWS_AS(make_dgridconv(LayerShape{2, 2, 3, 4, 4, false}, rng), std::invalid_argument);
}
