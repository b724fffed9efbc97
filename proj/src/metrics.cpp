#include "gridpose/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gridpose {

namespace {

void check_batch(const Tensor& pred, const Tensor& gt, const char* what) {
    if (pred.ndim() != 3 || pred.dim(2) != 3)
        throw std::invalid_argument(std::string(what) + ": expected N x J x 3, got " + shape_str(pred.shape));
    if (!pred.same_shape(gt)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

/// Jacobi eigen-decomposition of a symmetric n x n matrix (n <= 4).
/// Eigenvalues land on the diagonal of a; v receives the eigenvectors
/// column-wise.
template <int N>
void jacobi_eigen(std::array<double, N * N>& a, std::array<double, N * N>& v) {
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) v[static_cast<size_t>(i * N + j)] = i == j ? 1.0 : 0.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < N; ++p)
            for (int q = p + 1; q < N; ++q) off += a[static_cast<size_t>(p * N + q)] * a[static_cast<size_t>(p * N + q)];
        if (off < 1e-30) return;
        for (int p = 0; p < N; ++p)
            for (int q = p + 1; q < N; ++q) {
                const double apq = a[static_cast<size_t>(p * N + q)];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p * N + p)];
                const double aqq = a[static_cast<size_t>(q * N + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < N; ++k) {
                    const double akp = a[static_cast<size_t>(k * N + p)];
                    const double akq = a[static_cast<size_t>(k * N + q)];
                    a[static_cast<size_t>(k * N + p)] = c * akp - s * akq;
                    a[static_cast<size_t>(k * N + q)] = s * akp + c * akq;
                }
                for (int k = 0; k < N; ++k) {
                    const double apk = a[static_cast<size_t>(p * N + k)];
                    const double aqk = a[static_cast<size_t>(q * N + k)];
                    a[static_cast<size_t>(p * N + k)] = c * apk - s * aqk;
                    a[static_cast<size_t>(q * N + k)] = s * apk + c * aqk;
                }
                for (int k = 0; k < N; ++k) {
                    const double vkp = v[static_cast<size_t>(k * N + p)];
                    const double vkq = v[static_cast<size_t>(k * N + q)];
                    v[static_cast<size_t>(k * N + p)] = c * vkp - s * vkq;
                    v[static_cast<size_t>(k * N + q)] = s * vkp + c * vkq;
                }
            }
    }
}

std::array<double, 9> quat_to_rot(double w, double x, double y, double z) {
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

}  // namespace

Tensor procrustes_align(const Tensor& source, const Tensor& target, bool with_scale, bool* degenerate) {
    if (source.ndim() != 2 || source.dim(1) != 3 || !source.same_shape(target))
        throw std::invalid_argument("procrustes_align: expected matching J x 3 point sets");
    const int j = source.dim(0);
    if (j < 3) throw std::invalid_argument("procrustes_align: need at least 3 points");
    if (degenerate) *degenerate = false;

    double mu_s[3] = {0, 0, 0}, mu_t[3] = {0, 0, 0};
    for (int i = 0; i < j; ++i)
        for (int c = 0; c < 3; ++c) {
            mu_s[c] += source.at(i, c) / j;
            mu_t[c] += target.at(i, c) / j;
        }

    // Cross-covariance of the centered sets, plus a collinearity check on
    // the target's second principal moment.
    double cov[9] = {0};
    double var_s = 0.0;
    double tcov[9] = {0};
    for (int i = 0; i < j; ++i) {
        double sc[3], tc[3];
        for (int c = 0; c < 3; ++c) {
            sc[c] = source.at(i, c) - mu_s[c];
            tc[c] = target.at(i, c) - mu_t[c];
            var_s += sc[c] * sc[c];
        }
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                cov[r * 3 + c] += sc[r] * tc[c];
                tcov[r * 3 + c] += tc[r] * tc[c];
            }
    }
    {
        std::array<double, 9> tmat{};
        std::array<double, 9> tvec{};
        std::copy(tcov, tcov + 9, tmat.begin());
        jacobi_eigen<3>(tmat, tvec);
        std::array<double, 3> lam{tmat[0], tmat[4], tmat[8]};
        std::sort(lam.begin(), lam.end());
        if (lam[1] <= 1e-9 * std::max(lam[2], 1e-30)) {
            if (degenerate) *degenerate = true;
            return source;
        }
    }

    // Horn's method: the optimal rotation is the unit quaternion maximizing
    // q^T K q, the top eigenvector of the symmetric 4x4 gain matrix.
    const double sxx = cov[0], sxy = cov[1], sxz = cov[2];
    const double syx = cov[3], syy = cov[4], syz = cov[5];
    const double szx = cov[6], szy = cov[7], szz = cov[8];
    std::array<double, 16> k = {
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    };
    std::array<double, 16> vecs{};
    jacobi_eigen<4>(k, vecs);
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (k[static_cast<size_t>(i * 4 + i)] > k[static_cast<size_t>(best * 4 + best)]) best = i;
    const double qw = vecs[static_cast<size_t>(0 * 4 + best)];
    const double qx = vecs[static_cast<size_t>(1 * 4 + best)];
    const double qy = vecs[static_cast<size_t>(2 * 4 + best)];
    const double qz = vecs[static_cast<size_t>(3 * 4 + best)];
    const double qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
    const auto rot = quat_to_rot(qw / qn, qx / qn, qy / qn, qz / qn);

    double scale = 1.0;
    if (with_scale) {
        // trace(R * cov) over the source variance.
        double tr = 0.0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) tr += rot[static_cast<size_t>(r * 3 + c)] * cov[c * 3 + r];
        scale = tr / var_s;
    }

    Tensor aligned({j, 3});
    for (int i = 0; i < j; ++i) {
        double sc[3];
        for (int c = 0; c < 3; ++c) sc[c] = source.at(i, c) - mu_s[c];
        for (int r = 0; r < 3; ++r) {
            double acc = 0.0;
            for (int c = 0; c < 3; ++c) acc += rot[static_cast<size_t>(r * 3 + c)] * sc[c];
            aligned.at(i, r) = scale * acc + mu_t[r];
        }
    }
    return aligned;
}

double mpjpe(const Tensor& pred, const Tensor& gt) {
    check_batch(pred, gt, "mpjpe");
    const int n = pred.dim(0), j = pred.dim(1);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int q = 0; q < j; ++q) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(i, q, c) - gt.at(i, q, c);
                d2 += d * d;
            }
            total += std::sqrt(d2);
        }
    return total / (static_cast<double>(n) * j);
}

std::vector<double> per_joint_mpjpe(const Tensor& pred, const Tensor& gt) {
    check_batch(pred, gt, "per_joint_mpjpe");
    const int n = pred.dim(0), j = pred.dim(1);
    std::vector<double> out(static_cast<size_t>(j), 0.0);
    for (int i = 0; i < n; ++i)
        for (int q = 0; q < j; ++q) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(i, q, c) - gt.at(i, q, c);
                d2 += d * d;
            }
            out[static_cast<size_t>(q)] += std::sqrt(d2) / n;
        }
    return out;
}

double pa_mpjpe(const Tensor& pred, const Tensor& gt, bool with_scale, int* degenerate_samples) {
    check_batch(pred, gt, "pa_mpjpe");
    const int n = pred.dim(0), j = pred.dim(1);
    double total = 0.0;
    int used = 0, skipped = 0;
    Tensor sample_pred({j, 3}), sample_gt({j, 3});
    for (int i = 0; i < n; ++i) {
        for (int q = 0; q < j; ++q)
            for (int c = 0; c < 3; ++c) {
                sample_pred.at(q, c) = pred.at(i, q, c);
                sample_gt.at(q, c) = gt.at(i, q, c);
            }
        bool degenerate = false;
        const Tensor aligned = procrustes_align(sample_pred, sample_gt, with_scale, &degenerate);
        if (degenerate) {
            ++skipped;
            continue;
        }
        double sum = 0.0;
        for (int q = 0; q < j; ++q) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = aligned.at(q, c) - sample_gt.at(q, c);
                d2 += d * d;
            }
            sum += std::sqrt(d2);
        }
        total += sum / j;
        ++used;
    }
    if (degenerate_samples) *degenerate_samples = skipped;
    if (used == 0) throw std::runtime_error("pa_mpjpe: every sample was degenerate (collinear ground truth)");
    return total / used;
}

double pck(const Tensor& pred, const Tensor& gt, double threshold_mm) {
    check_batch(pred, gt, "pck");
    const int n = pred.dim(0), j = pred.dim(1);
    int64_t correct = 0;
    for (int i = 0; i < n; ++i)
        for (int q = 0; q < j; ++q) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(i, q, c) - gt.at(i, q, c);
                d2 += d * d;
            }
            if (std::sqrt(d2) <= threshold_mm) ++correct;
        }
    return 100.0 * static_cast<double>(correct) / (static_cast<double>(n) * j);
}

double auc(const Tensor& pred, const Tensor& gt) {
    double total = 0.0;
    int points = 0;
    for (int t = 5; t <= 150; t += 5) {
        total += pck(pred, gt, static_cast<double>(t));
        ++points;
    }
    return total / points;
}

MetricReport evaluate_metrics(const Tensor& pred, const Tensor& gt, bool pa_with_scale) {
    MetricReport r;
    r.mpjpe_mm = mpjpe(pred, gt);
    r.pa_mpjpe_mm = pa_mpjpe(pred, gt, pa_with_scale, &r.degenerate_samples);
    r.pck_percent = pck(pred, gt);
    r.auc_percent = auc(pred, gt);
    r.per_joint_mpjpe = per_joint_mpjpe(pred, gt);
    return r;
}

}  // namespace gridpose
