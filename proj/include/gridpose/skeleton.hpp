#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gridpose {

/// Connected human skeleton graph: joints, undirected bone edges and the
/// root (anchor) joint. Joint identity is by name; indices follow the order
/// joints were declared in.
struct SkeletonTopology {
    std::vector<std::string> joint_names;
    std::vector<std::pair<int, int>> edges;
    int root_index = 0;

    int joint_count() const { return static_cast<int>(joint_names.size()); }
    int index_of(const std::string& name) const;

    /// Parent joint per index walking the tree out from the root; root maps
    /// to itself. Requires a connected graph.
    std::vector<int> parents() const;

    /// Throws std::invalid_argument on self-loops, out-of-range endpoints,
    /// a disconnected graph or an invalid root.
    void validate() const;

    bool same_joints(const SkeletonTopology& o) const {
        return joint_names == o.joint_names && root_index == o.root_index;
    }
};

/// The 17-joint Human3.6M-convention skeleton shipped with the library:
/// torso root, spine-neck-head chain, two arm chains, two leg chains.
SkeletonTopology canonical_h36m17();

/// Skeleton CSV: '#' comments allowed, first data line `root,<name>`,
/// remaining lines `joint_a,joint_b` edges. Joint indices follow first
/// appearance, root first.
SkeletonTopology load_skeleton_csv(const std::string& path);
void save_skeleton_csv(const SkeletonTopology& topo, const std::string& path);

}  // namespace gridpose
