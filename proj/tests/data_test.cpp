#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gridpose/data.hpp"
#include "test_support.hpp"

using namespace gridpose;
using namespace gridpose::testing;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

double bone_length(const Tensor& pose, int a, int b) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = pose.at(a, c) - pose.at(b, c);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("rest pose projected from the optical axis is a scaled centered copy") {
    const auto topo = canonical_h36m17();
    const Tensor rest = rest_pose(topo);
    CameraModel cam;
    Tensor cam_pose = rest;
    for (int j = 0; j < 17; ++j) cam_pose.at(j, 2) += cam.root_depth;
    const Tensor px = project(cam, cam_pose);
    const double scale_x = cam.fx / cam.root_depth;
    const double scale_y = cam.fy / cam.root_depth;
    for (int j = 0; j < 17; ++j) {
        CHECK_NEAR(px.at(j, 0), cam.cx + scale_x * rest.at(j, 0), 1e-9);
        CHECK_NEAR(px.at(j, 1), cam.cy + scale_y * rest.at(j, 1), 1e-9);
    }
    Tensor behind = cam_pose;
    behind.at(3, 2) = -1.0;
    CHECK_THROWS_AS(project(cam, behind), std::runtime_error);
}

TEST_CASE("synthetic samples preserve bone lengths") {
    const auto topo = canonical_h36m17();
    const Tensor rest = rest_pose(topo);
    const Dataset data = synth_generate(20, topo, CameraModel{}, 5);
    for (const auto& sample : data.samples)
        for (auto [a, b] : topo.edges)
            CHECK_NEAR(bone_length(sample.pose3d, a, b), bone_length(rest, a, b), 1e-9);
}

TEST_CASE("synthetic samples satisfy reprojection consistency") {
    const auto topo = canonical_h36m17();
    const Dataset data = synth_generate(50, topo, CameraModel{}, 6);
    for (const auto& sample : data.samples) {
        REQUIRE(sample.camera.has_value());
        const auto& cam = *sample.camera;
        // Recover the absolute root from its projection and stored depth.
        const double zr = cam.root_depth;
        const double xr = (sample.pose2d.at(topo.root_index, 0) - cam.cx) * zr / cam.fx;
        const double yr = (sample.pose2d.at(topo.root_index, 1) - cam.cy) * zr / cam.fy;
        Tensor cam_pose({17, 3});
        for (int j = 0; j < 17; ++j) {
            cam_pose.at(j, 0) = sample.pose3d.at(j, 0) + xr;
            cam_pose.at(j, 1) = sample.pose3d.at(j, 1) + yr;
            cam_pose.at(j, 2) = sample.pose3d.at(j, 2) + zr;
        }
        const Tensor px = project(cam, cam_pose);
        for (int j = 0; j < 17; ++j) {
            CHECK_NEAR(px.at(j, 0), sample.pose2d.at(j, 0), 1e-6);
            CHECK_NEAR(px.at(j, 1), sample.pose2d.at(j, 1), 1e-6);
        }
        // Root-relative convention: the stored root is exactly the origin.
        for (int c = 0; c < 3; ++c) CHECK(sample.pose3d.at(topo.root_index, c) == 0.0);
    }
}

TEST_CASE("synthetic generation is deterministic and stream-partitioned") {
    const auto topo = canonical_h36m17();
    const Dataset a = synth_generate(10, topo, CameraModel{}, 7);
    const Dataset b = synth_generate(10, topo, CameraModel{}, 7);
    const Dataset c = synth_generate(5, topo, CameraModel{}, 7);
    for (int i = 0; i < 10; ++i) {
        CHECK(a.samples[static_cast<size_t>(i)].pose2d.v == b.samples[static_cast<size_t>(i)].pose2d.v);
        CHECK(a.samples[static_cast<size_t>(i)].pose3d.v == b.samples[static_cast<size_t>(i)].pose3d.v);
    }
    for (int i = 0; i < 5; ++i)
        CHECK(a.samples[static_cast<size_t>(i)].pose3d.v == c.samples[static_cast<size_t>(i)].pose3d.v);
    CHECK_THROWS_AS(synth_generate(0, topo, CameraModel{}, 1), std::invalid_argument);
}

TEST_CASE("standard normalization maps corners and scales millimeters") {
    const auto topo = canonical_h36m17();
    PoseSample sample;
    sample.pose2d = Tensor({17, 2});
    sample.pose3d = Tensor({17, 3});
    CameraModel cam;
    sample.camera = cam;
    sample.pose2d.at(0, 0) = 0.0;
    sample.pose2d.at(0, 1) = 0.0;
    sample.pose2d.at(1, 0) = cam.image_w;
    sample.pose2d.at(1, 1) = cam.image_h;
    sample.pose3d.at(2, 1) = 1000.0;

    const NormalizedSample n = normalize_standard(sample);
    CHECK(n.input2d.at(0, 0) == -1.0);
    CHECK(n.input2d.at(0, 1) == -1.0);
    CHECK(n.input2d.at(1, 0) == 1.0);
    CHECK(n.input2d.at(1, 1) == 1.0);
    CHECK(n.target3d.at(2, 1) == 1.0);

    // Affine round trips.
    Rng rng(8);
    const Tensor px = random_tensor({17, 2}, rng, 0.0, 1000.0);
    PoseSample s2 = sample;
    s2.pose2d = px;
    const NormalizedSample n2 = normalize_standard(s2);
    const Tensor back2d = denormalize_2d(n2.input2d, cam);
    for (size_t e = 0; e < px.v.size(); ++e) CHECK_NEAR(back2d.v[e], px.v[e], 1e-12);
    const Tensor back3d = denormalize_standard_3d(n2.target3d);
    for (size_t e = 0; e < back3d.v.size(); ++e) CHECK_NEAR(back3d.v[e], s2.pose3d.v[e], 1e-12);

    PoseSample no_cam = sample;
    no_cam.camera.reset();
    CHECK_THROWS_AS(normalize_standard(no_cam), std::invalid_argument);
}

TEST_CASE("uvz projection recovers ground truth and scales with focal length") {
    const auto topo = canonical_h36m17();
    CameraModel cam;

    // Principal-point ray lands on X=Y=0 regardless of depth.
    Tensor uvz({17, 3});
    for (int j = 0; j < 17; ++j) {
        uvz.at(j, 0) = cam.cx;
        uvz.at(j, 1) = cam.cy;
        uvz.at(j, 2) = 40.0 * j;
    }
    const Tensor on_axis = uvz_project(uvz, cam, topo.root_index);
    for (int j = 0; j < 17; ++j) {
        CHECK(on_axis.at(j, 0) == 0.0);
        CHECK(on_axis.at(j, 1) == 0.0);
    }

    // Ground-truth (u, v, z) inverts to the stored root-relative pose.
    const Dataset data = synth_generate(10, topo, cam, 9);
    for (const auto& sample : data.samples) {
        Tensor gt_uvz({17, 3});
        for (int j = 0; j < 17; ++j) {
            gt_uvz.at(j, 0) = sample.pose2d.at(j, 0);
            gt_uvz.at(j, 1) = sample.pose2d.at(j, 1);
            gt_uvz.at(j, 2) = sample.pose3d.at(j, 2);
        }
        const Tensor rec = uvz_project(gt_uvz, *sample.camera, topo.root_index);
        for (size_t e = 0; e < rec.v.size(); ++e) CHECK_NEAR(rec.v[e], sample.pose3d.v[e], 1e-6);
    }

    // Doubling fx halves the recovered X for fixed (u - cx, Z); the root on
    // the principal ray keeps the root-relative offset at zero.
    Tensor ray({2, 3});
    ray.at(0, 0) = cam.cx;
    ray.at(0, 1) = cam.cy;
    ray.at(1, 0) = cam.cx + 100.0;
    ray.at(1, 1) = cam.cy;
    CameraModel wide = cam;
    wide.fx *= 2.0;
    const Tensor narrow_x = uvz_project(ray, cam, 0);
    const Tensor wide_x = uvz_project(ray, wide, 0);
    CHECK(narrow_x.at(1, 0) > 0.0);
    CHECK_NEAR(wide_x.at(1, 0), 0.5 * narrow_x.at(1, 0), 1e-9);

    Tensor behind({1, 3});
    behind.at(0, 2) = -2.0 * cam.root_depth;
    CHECK_THROWS_AS(uvz_project(behind, cam, 0), std::runtime_error);
}

TEST_CASE("uvz targets supervise normalized pixel coordinates plus depth") {
    const auto topo = canonical_h36m17();
    const Dataset data = synth_generate(3, topo, CameraModel{}, 10);
    const auto& s = data.samples[0];
    const NormalizedSample n = normalize_uvz(s);
    for (int j = 0; j < 17; ++j) {
        CHECK(n.target3d.at(j, 0) == n.input2d.at(j, 0));
        CHECK(n.target3d.at(j, 1) == n.input2d.at(j, 1));
        CHECK(n.target3d.at(j, 2) == s.pose3d.at(j, 2) / 1000.0);
    }
    CHECK(n.target3d.at(topo.root_index, 2) == 0.0);

    // prediction_to_mm applied to the exact targets recovers the pose.
    const Tensor mm = prediction_to_mm(n.target3d, NormMode::Uvz, s, topo.root_index);
    for (size_t e = 0; e < mm.v.size(); ++e) CHECK_NEAR(mm.v[e], s.pose3d.v[e], 1e-6);
}

TEST_CASE("dataset csv round trip preserves every value") {
    const auto topo = canonical_h36m17();
    const Dataset data = synth_generate(25, topo, CameraModel{}, 11);
    const std::string poses = tmp_path("gridpose_data_poses.csv");
    const std::string cams = tmp_path("gridpose_data_cams.csv");
    save_dataset_csv(data, poses, cams);
    const Dataset loaded = load_dataset_csv(poses, cams, topo);
    REQUIRE(loaded.size() == data.size());
    CHECK(loaded.source_tag == "synthetic");
    CHECK(loaded.seed == 11);
    for (int i = 0; i < data.size(); ++i) {
        const auto& a = data.samples[static_cast<size_t>(i)];
        const auto& b = loaded.samples[static_cast<size_t>(i)];
        CHECK(a.pose2d.v == b.pose2d.v);
        CHECK(a.pose3d.v == b.pose3d.v);
        REQUIRE(b.camera.has_value());
        CHECK(a.camera->root_depth == b.camera->root_depth);
    }
    std::filesystem::remove(poses);
    std::filesystem::remove(cams);
}

TEST_CASE("malformed dataset rows name the line") {
    const std::string path = tmp_path("gridpose_data_bad.csv");
    {
        std::ofstream out(path);
        out << "sample_id,joint_name,u,v,x,y,z\n";
        out << "0,torso,1,2,3,4,5\n";
        out << "0,r_hip,1,2,3\n";  // wrong column count on line 3
    }
    try {
        load_dataset_csv(path, "", canonical_h36m17());
        FAIL("expected rejection");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("a 10k-sample file loads quickly") {
    const auto topo = canonical_h36m17();
    const Dataset data = synth_generate(10000, topo, CameraModel{}, 12);
    const std::string poses = tmp_path("gridpose_data_10k.csv");
    const std::string cams = tmp_path("gridpose_data_10k_cams.csv");
    save_dataset_csv(data, poses, cams);
    const auto start = std::chrono::steady_clock::now();
    const Dataset loaded = load_dataset_csv(poses, cams, topo);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(loaded.size() == 10000);
    CHECK(secs <= 2.0);
    std::filesystem::remove(poses);
    std::filesystem::remove(cams);
}
