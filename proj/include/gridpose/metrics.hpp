#pragma once

#include <vector>

#include "gridpose/tensor.hpp"

namespace gridpose {

struct MetricReport {
    double mpjpe_mm = 0;
    double pa_mpjpe_mm = 0;
    double pck_percent = 0;
    double auc_percent = 0;
    std::vector<double> per_joint_mpjpe;
    int degenerate_samples = 0;  // samples skipped by the alignment step
};

/// Mean Euclidean joint error over an N x J x 3 batch, millimeters. Both
/// arguments must be root-relative.
double mpjpe(const Tensor& pred, const Tensor& gt);

std::vector<double> per_joint_mpjpe(const Tensor& pred, const Tensor& gt);

/// MPJPE after per-sample Procrustes alignment of the prediction to the
/// ground truth (optimal rotation + translation, plus uniform scale when
/// with_scale is set — the Protocol-2 default). Samples whose ground truth
/// is collinear are flagged and excluded from the mean.
double pa_mpjpe(const Tensor& pred, const Tensor& gt, bool with_scale = true,
                int* degenerate_samples = nullptr);

/// Percentage of joints with error <= threshold (inclusive).
double pck(const Tensor& pred, const Tensor& gt, double threshold_mm = 150.0);

/// Mean PCK over thresholds 5,10,...,150 mm (30 points).
double auc(const Tensor& pred, const Tensor& gt);

MetricReport evaluate_metrics(const Tensor& pred, const Tensor& gt, bool pa_with_scale = true);

/// Optimal similarity alignment of one J x 3 point set onto another
/// (Horn's quaternion method). Returns the aligned source points; sets
/// *degenerate when the target points are collinear.
Tensor procrustes_align(const Tensor& source, const Tensor& target, bool with_scale,
                        bool* degenerate = nullptr);

}  // namespace gridpose
