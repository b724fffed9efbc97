#include "gridpose/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gridpose/csv.hpp"

namespace gridpose {

int SkeletonTopology::index_of(const std::string& name) const {
    for (size_t i = 0; i < joint_names.size(); ++i)
        if (joint_names[i] == name) return static_cast<int>(i);
    return -1;
}

std::vector<int> SkeletonTopology::parents() const {
    const int j = joint_count();
    std::vector<std::vector<int>> adj(static_cast<size_t>(j));
    for (auto [a, b] : edges) {
        adj[static_cast<size_t>(a)].push_back(b);
        adj[static_cast<size_t>(b)].push_back(a);
    }
    std::vector<int> parent(static_cast<size_t>(j), -1);
    std::vector<int> queue{root_index};
    parent[static_cast<size_t>(root_index)] = root_index;
    for (size_t head = 0; head < queue.size(); ++head) {
        const int cur = queue[head];
        for (int nb : adj[static_cast<size_t>(cur)])
            if (parent[static_cast<size_t>(nb)] < 0) {
                parent[static_cast<size_t>(nb)] = cur;
                queue.push_back(nb);
            }
    }
    for (int p : parent)
        if (p < 0) throw std::invalid_argument("skeleton: graph is not connected");
    return parent;
}

void SkeletonTopology::validate() const {
    const int j = joint_count();
    if (j < 1) throw std::invalid_argument("skeleton: no joints");
    if (root_index < 0 || root_index >= j) throw std::invalid_argument("skeleton: root index out of range");
    for (auto [a, b] : edges) {
        if (a == b) throw std::invalid_argument("skeleton: self-loop on joint " + std::to_string(a));
        if (a < 0 || a >= j || b < 0 || b >= j)
            throw std::invalid_argument("skeleton: edge endpoint out of range");
    }
    parents();  // throws if disconnected
}

SkeletonTopology canonical_h36m17() {
    SkeletonTopology t;
    t.joint_names = {"torso",    "r_hip",      "r_knee",   "r_ankle", "l_hip",   "l_knee",
                     "l_ankle",  "spine",      "thorax",   "neck",    "head",    "l_shoulder",
                     "l_elbow",  "l_wrist",    "r_shoulder", "r_elbow", "r_wrist"};
    t.root_index = 0;
    auto e = [&](const char* a, const char* b) { t.edges.emplace_back(t.index_of(a), t.index_of(b)); };
    e("torso", "r_hip");
    e("r_hip", "r_knee");
    e("r_knee", "r_ankle");
    e("torso", "l_hip");
    e("l_hip", "l_knee");
    e("l_knee", "l_ankle");
    e("torso", "spine");
    e("spine", "thorax");
    e("thorax", "neck");
    e("neck", "head");
    e("thorax", "l_shoulder");
    e("l_shoulder", "l_elbow");
    e("l_elbow", "l_wrist");
    e("thorax", "r_shoulder");
    e("r_shoulder", "r_elbow");
    e("r_elbow", "r_wrist");
    return t;
}

SkeletonTopology load_skeleton_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open skeleton file: " + path);

    SkeletonTopology t;
    std::vector<std::pair<std::string, std::string>> edge_names;
    std::string root_name;
    std::string line;
    int line_no = 0;
    bool have_root = false;
    auto intern = [&](const std::string& name) {
        int idx = t.index_of(name);
        if (idx < 0) {
            t.joint_names.push_back(name);
            idx = t.joint_count() - 1;
        }
        return idx;
    };
    while (std::getline(in, line)) {
        ++line_no;
        csv::strip_eol(line);
        if (line.empty() || line[0] == '#') continue;
        auto fields = csv::split(line);
        if (fields.size() != 2)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected two fields");
        if (!have_root) {
            if (fields[0] != "root")
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": first data line must name the root");
            root_name = fields[1];
            intern(root_name);
            have_root = true;
            continue;
        }
        edge_names.emplace_back(fields[0], fields[1]);
    }
    if (!have_root) throw std::runtime_error(path + ": missing root line");
    for (auto& [a, b] : edge_names) t.edges.emplace_back(intern(a), intern(b));
    t.root_index = t.index_of(root_name);
    t.validate();
    return t;
}

void save_skeleton_csv(const SkeletonTopology& topo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write skeleton file: " + path);
    out << "# skeleton edge list; first data line names the root joint\n";
    out << "root," << topo.joint_names[static_cast<size_t>(topo.root_index)] << "\n";
    for (auto [a, b] : topo.edges)
        out << topo.joint_names[static_cast<size_t>(a)] << "," << topo.joint_names[static_cast<size_t>(b)] << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace gridpose
