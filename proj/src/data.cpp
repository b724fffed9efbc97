#include "gridpose/data.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "gridpose/csv.hpp"

namespace gridpose {

NormMode norm_mode_from_string(const std::string& s) {
    if (s == "standard") return NormMode::Standard;
    if (s == "uvz") return NormMode::Uvz;
    throw std::invalid_argument("unknown normalization mode: " + s);
}

const char* to_string(NormMode m) { return m == NormMode::Standard ? "standard" : "uvz"; }

namespace {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

Vec3 rotate(const std::array<double, 9>& r, const Vec3& v) {
    return {r[0] * v.x + r[1] * v.y + r[2] * v.z, r[3] * v.x + r[4] * v.y + r[5] * v.z,
            r[6] * v.x + r[7] * v.y + r[8] * v.z};
}

std::array<double, 9> matmul3(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[static_cast<size_t>(i * 3 + j)] += a[static_cast<size_t>(i * 3 + k)] * b[static_cast<size_t>(k * 3 + j)];
    return c;
}

std::array<double, 9> axis_angle(const Vec3& axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis.x, y = axis.y, z = axis.z;
    return {t * x * x + c,     t * x * y - s * z, t * x * z + s * y,
            t * x * y + s * z, t * y * y + c,     t * y * z - s * x,
            t * x * z - s * y, t * y * z + s * x, t * z * z + c};
}

/// Bone vector (parent -> child) of the canonical rest skeleton,
/// millimeters. Joints outside the named set fall back to a deterministic
/// direction so arbitrary topologies still produce a rigid rest pose.
Vec3 canonical_bone(const std::string& child, int child_index) {
    static const std::map<std::string, Vec3> bones = {
        {"r_hip", {-130, 0, 0}},   {"l_hip", {130, 0, 0}},     {"r_knee", {0, 450, 0}},
        {"l_knee", {0, 450, 0}},   {"r_ankle", {0, 440, 0}},   {"l_ankle", {0, 440, 0}},
        {"spine", {0, -250, 0}},   {"thorax", {0, -250, 0}},   {"neck", {0, -120, 0}},
        {"head", {0, -120, 0}},    {"l_shoulder", {180, 0, 0}}, {"r_shoulder", {-180, 0, 0}},
        {"l_elbow", {280, 0, 0}},  {"r_elbow", {-280, 0, 0}},  {"l_wrist", {250, 0, 0}},
        {"r_wrist", {-250, 0, 0}},
    };
    auto it = bones.find(child);
    if (it != bones.end()) return it->second;
    const double phi = 2.399963229728653 * child_index;  // golden-angle spread
    const double cz = std::cos(0.5 + 0.1 * child_index);
    const double sz = std::sin(0.5 + 0.1 * child_index);
    return {300.0 * sz * std::cos(phi), 300.0 * sz * std::sin(phi), 300.0 * cz};
}

std::vector<int> bfs_order(const SkeletonTopology& topo, const std::vector<int>& parent) {
    std::vector<int> order{topo.root_index};
    std::vector<uint8_t> placed(static_cast<size_t>(topo.joint_count()), 0);
    placed[static_cast<size_t>(topo.root_index)] = 1;
    for (size_t head = 0; head < order.size(); ++head)
        for (int j = 0; j < topo.joint_count(); ++j)
            if (!placed[static_cast<size_t>(j)] && parent[static_cast<size_t>(j)] == order[head]) {
                order.push_back(j);
                placed[static_cast<size_t>(j)] = 1;
            }
    return order;
}

}  // namespace

Tensor rest_pose(const SkeletonTopology& topo) {
    const auto parent = topo.parents();
    const auto order = bfs_order(topo, parent);
    Tensor pose({topo.joint_count(), 3});
    for (int j : order) {
        if (j == topo.root_index) continue;
        const Vec3 bone = canonical_bone(topo.joint_names[static_cast<size_t>(j)], j);
        const int p = parent[static_cast<size_t>(j)];
        pose.at(j, 0) = pose.at(p, 0) + bone.x;
        pose.at(j, 1) = pose.at(p, 1) + bone.y;
        pose.at(j, 2) = pose.at(p, 2) + bone.z;
    }
    return pose;
}

Tensor project(const CameraModel& cam, const Tensor& cam_pose) {
    if (cam_pose.ndim() != 2 || cam_pose.dim(1) != 3) throw std::invalid_argument("project: expected J x 3 pose");
    const int j = cam_pose.dim(0);
    Tensor px({j, 2});
    for (int i = 0; i < j; ++i) {
        const double z = cam_pose.at(i, 2);
        if (z <= 0) throw std::runtime_error("project: joint " + std::to_string(i) + " behind the camera");
        px.at(i, 0) = cam.cx + cam.fx * cam_pose.at(i, 0) / z;
        px.at(i, 1) = cam.cy + cam.fy * cam_pose.at(i, 1) / z;
    }
    return px;
}

Dataset synth_generate(int n, const SkeletonTopology& topo, const CameraModel& cam, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
    topo.validate();
    const auto parent = topo.parents();
    const auto order = bfs_order(topo, parent);
    const Tensor rest = rest_pose(topo);
    const int j = topo.joint_count();
    constexpr double kMaxAngle = 60.0 * M_PI / 180.0;

    Dataset data;
    data.topology = topo;
    data.source_tag = "synthetic";
    data.seed = seed;
    data.samples.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, static_cast<uint64_t>(i) + 1);
        std::vector<std::array<double, 9>> accum(static_cast<size_t>(j),
                                                 {1, 0, 0, 0, 1, 0, 0, 0, 1});
        Tensor rel({j, 3});
        for (int joint : order) {
            if (joint == topo.root_index) continue;
            Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
            const double len = std::sqrt(axis.x * axis.x + axis.y * axis.y + axis.z * axis.z);
            if (len > 1e-12) {
                axis.x /= len;
                axis.y /= len;
                axis.z /= len;
            } else {
                axis = {0, 0, 1};
            }
            const double angle = rng.uniform(-kMaxAngle, kMaxAngle);
            const int p = parent[static_cast<size_t>(joint)];
            accum[static_cast<size_t>(joint)] = matmul3(accum[static_cast<size_t>(p)], axis_angle(axis, angle));
            const Vec3 bone{rest.at(joint, 0) - rest.at(p, 0), rest.at(joint, 1) - rest.at(p, 1),
                            rest.at(joint, 2) - rest.at(p, 2)};
            const Vec3 rotated = rotate(accum[static_cast<size_t>(joint)], bone);
            rel.at(joint, 0) = rel.at(p, 0) + rotated.x;
            rel.at(joint, 1) = rel.at(p, 1) + rotated.y;
            rel.at(joint, 2) = rel.at(p, 2) + rotated.z;
        }

        const double root_z = cam.root_depth * rng.uniform(0.8, 1.2);
        const double root_x = root_z * rng.uniform(-0.08, 0.08);
        const double root_y = root_z * rng.uniform(-0.08, 0.08);

        Tensor cam_pose({j, 3});
        for (int q = 0; q < j; ++q) {
            cam_pose.at(q, 0) = rel.at(q, 0) + root_x;
            cam_pose.at(q, 1) = rel.at(q, 1) + root_y;
            cam_pose.at(q, 2) = rel.at(q, 2) + root_z;
        }

        PoseSample sample;
        sample.pose2d = project(cam, cam_pose);
        sample.pose3d = std::move(rel);
        CameraModel sample_cam = cam;
        sample_cam.root_depth = root_z;
        sample.camera = sample_cam;
        data.samples.push_back(std::move(sample));
    }
    return data;
}

NormalizedSample normalize_standard(const PoseSample& sample) {
    if (!sample.camera) throw std::invalid_argument("normalize_standard: sample lacks camera image size");
    const auto& cam = *sample.camera;
    const int j = sample.pose2d.dim(0);
    NormalizedSample out;
    out.input2d = Tensor({j, 2});
    for (int i = 0; i < j; ++i) {
        out.input2d.at(i, 0) = 2.0 * sample.pose2d.at(i, 0) / cam.image_w - 1.0;
        out.input2d.at(i, 1) = 2.0 * sample.pose2d.at(i, 1) / cam.image_h - 1.0;
    }
    out.target3d = sample.pose3d;
    for (double& x : out.target3d.v) x /= 1000.0;
    return out;
}

NormalizedSample normalize_uvz(const PoseSample& sample) {
    NormalizedSample out = normalize_standard(sample);
    const int j = sample.pose2d.dim(0);
    for (int i = 0; i < j; ++i) {
        out.target3d.at(i, 0) = out.input2d.at(i, 0);
        out.target3d.at(i, 1) = out.input2d.at(i, 1);
        out.target3d.at(i, 2) = sample.pose3d.at(i, 2) / 1000.0;
    }
    return out;
}

NormalizedSample normalize_for(const PoseSample& sample, NormMode mode) {
    return mode == NormMode::Standard ? normalize_standard(sample) : normalize_uvz(sample);
}

Tensor denormalize_standard_3d(const Tensor& target3d) {
    Tensor out = target3d;
    for (double& x : out.v) x *= 1000.0;
    return out;
}

Tensor denormalize_2d(const Tensor& input2d, const CameraModel& cam) {
    Tensor out = input2d;
    for (int i = 0; i < input2d.dim(0); ++i) {
        out.at(i, 0) = (input2d.at(i, 0) + 1.0) * cam.image_w / 2.0;
        out.at(i, 1) = (input2d.at(i, 1) + 1.0) * cam.image_h / 2.0;
    }
    return out;
}

Tensor uvz_project(const Tensor& pred_uvz, const CameraModel& cam, int root_index) {
    if (pred_uvz.ndim() != 2 || pred_uvz.dim(1) != 3) throw std::invalid_argument("uvz_project: expected J x 3");
    const int j = pred_uvz.dim(0);
    Tensor abs3d({j, 3});
    for (int i = 0; i < j; ++i) {
        const double z = pred_uvz.at(i, 2) + cam.root_depth;
        if (z <= 0)
            throw std::runtime_error("uvz_project: joint " + std::to_string(i) + " behind the camera (Z=" +
                                     csv::fmt(z) + ")");
        abs3d.at(i, 0) = (pred_uvz.at(i, 0) - cam.cx) * z / cam.fx;
        abs3d.at(i, 1) = (pred_uvz.at(i, 1) - cam.cy) * z / cam.fy;
        abs3d.at(i, 2) = z;
    }
    Tensor out({j, 3});
    for (int i = 0; i < j; ++i)
        for (int c = 0; c < 3; ++c) out.at(i, c) = abs3d.at(i, c) - abs3d.at(root_index, c);
    return out;
}

Tensor prediction_to_mm(const Tensor& pred, NormMode mode, const PoseSample& sample, int root_index) {
    if (mode == NormMode::Standard) {
        Tensor mm = denormalize_standard_3d(pred);
        const double rx = mm.at(root_index, 0), ry = mm.at(root_index, 1), rz = mm.at(root_index, 2);
        for (int i = 0; i < mm.dim(0); ++i) {
            mm.at(i, 0) -= rx;
            mm.at(i, 1) -= ry;
            mm.at(i, 2) -= rz;
        }
        return mm;
    }
    if (!sample.camera) throw std::invalid_argument("prediction_to_mm: uvz mode requires a camera");
    const auto& cam = *sample.camera;
    const int j = pred.dim(0);
    Tensor uvz({j, 3});
    for (int i = 0; i < j; ++i) {
        uvz.at(i, 0) = (pred.at(i, 0) + 1.0) * cam.image_w / 2.0;
        uvz.at(i, 1) = (pred.at(i, 1) + 1.0) * cam.image_h / 2.0;
        uvz.at(i, 2) = pred.at(i, 2) * 1000.0;
    }
    return uvz_project(uvz, cam, root_index);
}

void save_dataset_csv(const Dataset& data, const std::string& pose_path, const std::string& camera_path) {
    {
        std::ofstream out(pose_path);
        if (!out) throw std::runtime_error("cannot write dataset: " + pose_path);
        out << "# source=" << data.source_tag << " seed=" << data.seed << "\n";
        out << "sample_id,joint_name,u,v,x,y,z\n";
        for (int i = 0; i < data.size(); ++i) {
            const auto& s = data.samples[static_cast<size_t>(i)];
            for (int j = 0; j < data.topology.joint_count(); ++j)
                out << i << "," << data.topology.joint_names[static_cast<size_t>(j)] << ","
                    << csv::fmt(s.pose2d.at(j, 0)) << "," << csv::fmt(s.pose2d.at(j, 1)) << ","
                    << csv::fmt(s.pose3d.at(j, 0)) << "," << csv::fmt(s.pose3d.at(j, 1)) << ","
                    << csv::fmt(s.pose3d.at(j, 2)) << "\n";
        }
        if (!out) throw std::runtime_error("write failed: " + pose_path);
    }
    std::ofstream out(camera_path);
    if (!out) throw std::runtime_error("cannot write camera sidecar: " + camera_path);
    out << "sample_id,fx,fy,cx,cy,image_w,image_h,root_depth\n";
    for (int i = 0; i < data.size(); ++i) {
        const auto& s = data.samples[static_cast<size_t>(i)];
        if (!s.camera) continue;
        const auto& c = *s.camera;
        out << i << "," << csv::fmt(c.fx) << "," << csv::fmt(c.fy) << "," << csv::fmt(c.cx) << ","
            << csv::fmt(c.cy) << "," << csv::fmt(c.image_w) << "," << csv::fmt(c.image_h) << ","
            << csv::fmt(c.root_depth) << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + camera_path);
}

Dataset load_dataset_csv(const std::string& pose_path, const std::string& camera_path,
                         const SkeletonTopology& topo) {
    std::ifstream in(pose_path);
    if (!in) throw std::runtime_error("cannot open dataset: " + pose_path);

    Dataset data;
    data.topology = topo;
    const int joints = topo.joint_count();

    std::string line;
    int line_no = 0;
    bool header_seen = false;
    int expected_sample = 0, expected_joint = 0;
    PoseSample current;
    auto begin_sample = [&]() {
        current.pose2d = Tensor({joints, 2});
        current.pose3d = Tensor({joints, 3});
        current.camera.reset();
    };
    begin_sample();
    while (std::getline(in, line)) {
        ++line_no;
        csv::strip_eol(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto src = line.find("source=");
            auto seed = line.find("seed=");
            if (src != std::string::npos)
                data.source_tag = line.substr(src + 7, line.find(' ', src) - (src + 7));
            if (seed != std::string::npos) data.seed = std::stoull(line.substr(seed + 5));
            continue;
        }
        if (!header_seen) {
            if (line != "sample_id,joint_name,u,v,x,y,z")
                throw std::runtime_error(pose_path + ":" + std::to_string(line_no) + ": unexpected header");
            header_seen = true;
            continue;
        }
        const auto fields = csv::split(line);
        const std::string ctx = pose_path + ":" + std::to_string(line_no);
        if (fields.size() != 7) throw std::runtime_error(ctx + ": expected 7 columns, got " + std::to_string(fields.size()));
        const int sample_id = static_cast<int>(csv::parse_long(fields[0], ctx));
        if (sample_id != expected_sample)
            throw std::runtime_error(ctx + ": sample ids must be sequential (expected " +
                                     std::to_string(expected_sample) + ")");
        if (fields[1] != topo.joint_names[static_cast<size_t>(expected_joint)])
            throw std::runtime_error(ctx + ": joint '" + fields[1] + "' out of order (expected '" +
                                     topo.joint_names[static_cast<size_t>(expected_joint)] + "')");
        current.pose2d.at(expected_joint, 0) = csv::parse_double(fields[2], ctx);
        current.pose2d.at(expected_joint, 1) = csv::parse_double(fields[3], ctx);
        current.pose3d.at(expected_joint, 0) = csv::parse_double(fields[4], ctx);
        current.pose3d.at(expected_joint, 1) = csv::parse_double(fields[5], ctx);
        current.pose3d.at(expected_joint, 2) = csv::parse_double(fields[6], ctx);
        if (++expected_joint == joints) {
            data.samples.push_back(std::move(current));
            begin_sample();
            expected_joint = 0;
            ++expected_sample;
        }
    }
    if (expected_joint != 0)
        throw std::runtime_error(pose_path + ": truncated sample " + std::to_string(expected_sample));

    if (!camera_path.empty()) {
        std::ifstream cam_in(camera_path);
        if (!cam_in) throw std::runtime_error("cannot open camera sidecar: " + camera_path);
        line_no = 0;
        header_seen = false;
        while (std::getline(cam_in, line)) {
            ++line_no;
            csv::strip_eol(line);
            if (line.empty() || line[0] == '#') continue;
            if (!header_seen) {
                if (line != "sample_id,fx,fy,cx,cy,image_w,image_h,root_depth")
                    throw std::runtime_error(camera_path + ":" + std::to_string(line_no) + ": unexpected header");
                header_seen = true;
                continue;
            }
            const auto fields = csv::split(line);
            const std::string ctx = camera_path + ":" + std::to_string(line_no);
            if (fields.size() != 8) throw std::runtime_error(ctx + ": expected 8 columns");
            const int sample_id = static_cast<int>(csv::parse_long(fields[0], ctx));
            if (sample_id < 0 || sample_id >= data.size())
                throw std::runtime_error(ctx + ": sample id out of range");
            CameraModel c;
            c.fx = csv::parse_double(fields[1], ctx);
            c.fy = csv::parse_double(fields[2], ctx);
            c.cx = csv::parse_double(fields[3], ctx);
            c.cy = csv::parse_double(fields[4], ctx);
            c.image_w = csv::parse_double(fields[5], ctx);
            c.image_h = csv::parse_double(fields[6], ctx);
            c.root_depth = csv::parse_double(fields[7], ctx);
            data.samples[static_cast<size_t>(sample_id)].camera = c;
        }
    }
    return data;
}

}  // namespace gridpose
