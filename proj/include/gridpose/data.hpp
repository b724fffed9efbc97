#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridpose/skeleton.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

enum class NormMode { Standard, Uvz };
NormMode norm_mode_from_string(const std::string& s);
const char* to_string(NormMode m);

/// Pinhole camera intrinsics plus the camera-space depth of the root joint.
struct CameraModel {
    double fx = 1150.0, fy = 1150.0;
    double cx = 500.0, cy = 500.0;
    double image_w = 1000.0, image_h = 1000.0;
    double root_depth = 5000.0;  // millimeters
};

struct PoseSample {
    Tensor pose2d;  // J x 2, pixels
    Tensor pose3d;  // J x 3, millimeters, root-relative camera coordinates
    std::optional<CameraModel> camera;
};

struct Dataset {
    SkeletonTopology topology;
    std::vector<PoseSample> samples;
    std::string source_tag;
    uint64_t seed = 0;
    int size() const { return static_cast<int>(samples.size()); }
};

/// Rest pose of the canonical bone-length skeleton, millimeters, root at the
/// origin.
Tensor rest_pose(const SkeletonTopology& topo);

/// Projects camera-space joints (J x 3 mm) to pixels through the pinhole
/// model. All depths must be positive.
Tensor project(const CameraModel& cam, const Tensor& cam_pose);

/// Samples articulated poses: canonical bone lengths, random per-bone
/// rotations within +/-60 degrees about random axes accumulated along
/// kinematic chains, root placed at a random camera-space position. Sample i
/// draws from stream (seed, i), so generation order does not matter.
Dataset synth_generate(int n, const SkeletonTopology& topo, const CameraModel& cam, uint64_t seed);

struct NormalizedSample {
    Tensor input2d;   // J x 2 in [-1, 1]
    Tensor target3d;  // J x 3 network-space targets
};

/// Standard normalization: pixels mapped linearly to [-1,1] per axis,
/// millimeters divided by 1000. Requires the sample to carry a camera
/// (image size).
NormalizedSample normalize_standard(const PoseSample& sample);

/// uvz normalization: inputs as in standard; targets are the normalized
/// pixel coordinates plus root-relative depth in meters (root z = 0).
NormalizedSample normalize_uvz(const PoseSample& sample);

NormalizedSample normalize_for(const PoseSample& sample, NormMode mode);

/// Inverse of the 3D target map for the standard scheme (meters -> mm).
Tensor denormalize_standard_3d(const Tensor& target3d);
/// Inverse of the 2D input map (units of [-1,1] -> pixels).
Tensor denormalize_2d(const Tensor& input2d, const CameraModel& cam);

/// Converts a (u px, v px, z mm root-relative) prediction to root-relative
/// 3D millimeters through the perspective model: Z = z + root_depth,
/// X = (u-cx) Z / fx, Y = (v-cy) Z / fy. Rejects any joint behind the
/// camera.
Tensor uvz_project(const Tensor& pred_uvz, const CameraModel& cam, int root_index);

/// Maps a normalized network prediction back to root-relative millimeters
/// for metric evaluation (subtracts the predicted root in standard mode,
/// applies uvz_project in uvz mode).
Tensor prediction_to_mm(const Tensor& pred, NormMode mode, const PoseSample& sample, int root_index);

/// Pose CSV: header `sample_id,joint_name,u,v,x,y,z`; camera sidecar CSV:
/// header `sample_id,fx,fy,cx,cy,image_w,image_h,root_depth`. Values are
/// serialized in round-trip decimal form.
void save_dataset_csv(const Dataset& data, const std::string& pose_path, const std::string& camera_path);
Dataset load_dataset_csv(const std::string& pose_path, const std::string& camera_path,
                         const SkeletonTopology& topo);

}  // namespace gridpose
