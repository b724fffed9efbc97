#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gridpose/metrics.hpp"
#include "test_support.hpp"

using namespace gridpose;
using namespace gridpose::testing;

namespace {

Tensor rotate_translate(const Tensor& pose, double angle, double scale, const std::array<double, 3>& t) {
    const double c = std::cos(angle), s = std::sin(angle);
    Tensor out(pose.shape);
    for (int n = 0; n < pose.dim(0); ++n)
        for (int j = 0; j < pose.dim(1); ++j) {
            const double x = pose.at(n, j, 0), y = pose.at(n, j, 1), z = pose.at(n, j, 2);
            out.at(n, j, 0) = scale * (c * x - s * y) + t[0];
            out.at(n, j, 1) = scale * (s * x + c * y) + t[1];
            out.at(n, j, 2) = scale * z + t[2];
        }
    return out;
}

/// Independent similarity-Procrustes oracle via Eigen's SVD (Umeyama).
double umeyama_error(const Tensor& pred, const Tensor& gt, int sample, bool with_scale) {
    const int j = pred.dim(1);
    Eigen::MatrixXd x(3, j), y(3, j);
    for (int q = 0; q < j; ++q)
        for (int c = 0; c < 3; ++c) {
            x(c, q) = pred.at(sample, q, c);
            y(c, q) = gt.at(sample, q, c);
        }
    const Eigen::Vector3d mx = x.rowwise().mean(), my = y.rowwise().mean();
    x.colwise() -= mx;
    y.colwise() -= my;
    const Eigen::Matrix3d cov = y * x.transpose() / j;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d sgn = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) sgn(2, 2) = -1.0;
    const Eigen::Matrix3d rot = svd.matrixU() * sgn * svd.matrixV().transpose();
    double scale = 1.0;
    if (with_scale) {
        const double var = x.squaredNorm() / j;
        scale = (svd.singularValues().asDiagonal() * sgn).trace() / var;
    }
    double total = 0.0;
    for (int q = 0; q < j; ++q) {
        const Eigen::Vector3d aligned = scale * rot * x.col(q) + my;
        total += (aligned - (y.col(q) + my)).norm();
    }
    return total / j;
}

}  // namespace

TEST_CASE("mpjpe values and oracle") {
    Rng rng(1);
    const Tensor gt = random_tensor({4, 17, 3}, rng, -100.0, 100.0);
    CHECK(mpjpe(gt, gt) == 0.0);

    Tensor pred = gt;
    pred.at(0, 3, 0) += 3.0;
    pred.at(0, 3, 1) += 4.0;
    CHECK_NEAR(mpjpe(pred, gt), 5.0 / (4 * 17), 1e-12);

    const Tensor a = random_tensor({4, 17, 3}, rng, -100.0, 100.0);
    double acc = 0.0;
    for (int n = 0; n < 4; ++n)
        for (int j = 0; j < 17; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) d2 += (a.at(n, j, c) - gt.at(n, j, c)) * (a.at(n, j, c) - gt.at(n, j, c));
            acc += std::sqrt(d2);
        }
    CHECK_NEAR(mpjpe(a, gt), acc / (4 * 17), 1e-12);
    CHECK_THROWS_AS(mpjpe(a, Tensor({4, 16, 3})), std::invalid_argument);

    // Single 5mm error in one 17-joint sample.
    Tensor one_pred({1, 17, 3}), one_gt({1, 17, 3});
    one_pred.at(0, 6, 0) = 3.0;
    one_pred.at(0, 6, 1) = 4.0;
    CHECK_NEAR(mpjpe(one_pred, one_gt), 5.0 / 17.0, 1e-12);
}

TEST_CASE("mpjpe is invariant to a shared rigid transform") {
    Rng rng(2);
    const Tensor a = random_tensor({3, 17, 3}, rng, -200.0, 200.0);
    const Tensor b = random_tensor({3, 17, 3}, rng, -200.0, 200.0);
    const Tensor ta = rotate_translate(a, 0.7, 1.0, {10.0, -4.0, 2.5});
    const Tensor tb = rotate_translate(b, 0.7, 1.0, {10.0, -4.0, 2.5});
    CHECK_NEAR(mpjpe(ta, tb), mpjpe(a, b), 1e-9);
}

TEST_CASE("pa_mpjpe recovers rigid and similarity transforms") {
    Rng rng(3);
    const Tensor gt = random_tensor({5, 17, 3}, rng, -300.0, 300.0);
    const Tensor rigid = rotate_translate(gt, 1.1, 1.0, {50.0, 20.0, -30.0});
    CHECK(pa_mpjpe(rigid, gt) <= 1e-9);
    const Tensor scaled = rotate_translate(gt, -0.4, 2.0, {5.0, 0.0, 9.0});
    CHECK(pa_mpjpe(scaled, gt, /*with_scale=*/true) <= 1e-9);
    CHECK(pa_mpjpe(scaled, gt, /*with_scale=*/false) > 1.0);  // rigid-only cannot absorb the doubling

    Tensor twice({1, 17, 3});
    for (int j = 0; j < 17; ++j)
        for (int c = 0; c < 3; ++c) twice.at(0, j, c) = 2.0 * gt.at(0, j, c);
    Tensor first({1, 17, 3});
    for (int j = 0; j < 17; ++j)
        for (int c = 0; c < 3; ++c) first.at(0, j, c) = gt.at(0, j, c);
    CHECK(pa_mpjpe(twice, first) <= 1e-9);
}

TEST_CASE("pa_mpjpe matches the independent SVD oracle") {
    Rng rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor gt = random_tensor({1, 17, 3}, rng, -200.0, 200.0);
        Tensor pred = rotate_translate(gt, rng.uniform(-3.0, 3.0), rng.uniform(0.5, 1.8),
                                       {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)});
        for (double& x : pred.v) x += rng.uniform(-20.0, 20.0);  // perturbation
        for (bool with_scale : {true, false}) {
            const double mine = pa_mpjpe(pred, gt, with_scale);
            const double oracle = umeyama_error(pred, gt, 0, with_scale);
            CHECK_NEAR(mine, oracle, 1e-9);
        }
    }
}

TEST_CASE("alignment never increases the error") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const Tensor gt = random_tensor({2, 17, 3}, rng, -150.0, 150.0);
        Tensor pred = random_tensor({2, 17, 3}, rng, -150.0, 150.0);
        CHECK(pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9);
    }
}

TEST_CASE("collinear ground truth is flagged") {
    Tensor gt({2, 17, 3}), pred({2, 17, 3});
    Rng rng(6);
    for (int j = 0; j < 17; ++j) {
        gt.at(0, j, 0) = 10.0 * j;  // a straight line
        for (int c = 0; c < 3; ++c) {
            gt.at(1, j, c) = rng.uniform(-100.0, 100.0);
            pred.at(0, j, c) = rng.uniform(-100.0, 100.0);
            pred.at(1, j, c) = rng.uniform(-100.0, 100.0);
        }
    }
    int degenerate = 0;
    pa_mpjpe(pred, gt, true, &degenerate);
    CHECK(degenerate == 1);
}

TEST_CASE("pck thresholds and monotonicity") {
    Tensor gt({1, 10, 3}), pred({1, 10, 3});
    CHECK(pck(pred, gt) == 100.0);
    for (int j = 0; j < 10; ++j) pred.at(0, j, 0) = 200.0;
    CHECK(pck(pred, gt) == 0.0);
    for (int j = 0; j < 5; ++j) pred.at(0, j, 0) = 10.0;
    CHECK(pck(pred, gt) == 50.0);
    double prev = -1.0;
    for (double t = 0.0; t <= 300.0; t += 25.0) {
        const double v = pck(pred, gt, t);
        CHECK(v >= prev);
        prev = v;
    }
    // Inclusive threshold.
    Tensor edge({1, 1, 3});
    edge.at(0, 0, 0) = 150.0;
    CHECK(pck(edge, Tensor({1, 1, 3})) == 100.0);
}

TEST_CASE("auc trivial values and uniform-error expectation") {
    Tensor gt({1, 10, 3}), pred({1, 10, 3});
    CHECK(auc(pred, gt) == 100.0);
    for (int j = 0; j < 10; ++j) pred.at(0, j, 0) = 151.0;
    CHECK(auc(pred, gt) == 0.0);

    // Errors uniform on [0, 150] mm: mean PCK over the 5..150 grid is ~51.7%.
    Rng rng(7);
    const int n = 100000;
    Tensor big_gt({1, n, 3}), big_pred({1, n, 3});
    for (int j = 0; j < n; ++j) big_pred.at(0, j, 0) = rng.uniform(0.0, 150.0);
    const double a = auc(big_pred, big_gt);
    CHECK_NEAR(a, 51.6667, 1.0);
    CHECK(a >= 48.0);
    CHECK(a <= 52.0);
}

TEST_CASE("metrics are invariant to sample order") {
    Rng rng(8);
    const int n = 7;
    Tensor gt = random_tensor({n, 17, 3}, rng, -100.0, 100.0);
    Tensor pred = random_tensor({n, 17, 3}, rng, -100.0, 100.0);
    Tensor gt_rev({n, 17, 3}), pred_rev({n, 17, 3});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 17; ++j)
            for (int c = 0; c < 3; ++c) {
                gt_rev.at(n - 1 - i, j, c) = gt.at(i, j, c);
                pred_rev.at(n - 1 - i, j, c) = pred.at(i, j, c);
            }
    CHECK_NEAR(mpjpe(pred, gt), mpjpe(pred_rev, gt_rev), 1e-12);
    CHECK_NEAR(pa_mpjpe(pred, gt), pa_mpjpe(pred_rev, gt_rev), 1e-9);
    CHECK(pck(pred, gt) == pck(pred_rev, gt_rev));
}

TEST_CASE("report carries all metrics") {
    Rng rng(9);
    const Tensor gt = random_tensor({3, 17, 3}, rng, -100.0, 100.0);
    Tensor pred = gt;
    for (double& x : pred.v) x += rng.uniform(-10.0, 10.0);
    const MetricReport r = evaluate_metrics(pred, gt);
    CHECK(r.mpjpe_mm > 0.0);
    CHECK(r.pa_mpjpe_mm <= r.mpjpe_mm + 1e-9);
    CHECK(r.pck_percent >= 0.0);
    CHECK(r.pck_percent <= 100.0);
    CHECK(r.auc_percent >= 0.0);
    CHECK(r.auc_percent <= 100.0);
    CHECK(r.per_joint_mpjpe.size() == 17);
}
