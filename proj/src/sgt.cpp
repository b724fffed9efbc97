#include "gridpose/sgt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gridpose/csv.hpp"

namespace gridpose {

int AssignmentMatrix::joint_of_cell(int cell) const {
    int found = -1;
    for (int j = 0; j < joints; ++j)
        if (at(cell, j)) {
            if (found >= 0) return -1;
            found = j;
        }
    return found;
}

bool AssignmentMatrix::rows_one_hot() const {
    for (int p = 0; p < grid.cells(); ++p)
        if (joint_of_cell(p) < 0) return false;
    return true;
}

std::vector<int> AssignmentMatrix::joint_counts() const {
    std::vector<int> counts(static_cast<size_t>(joints), 0);
    for (int p = 0; p < grid.cells(); ++p)
        for (int j = 0; j < joints; ++j)
            if (at(p, j)) ++counts[static_cast<size_t>(j)];
    return counts;
}

std::vector<int> AssignmentMatrix::uncovered_joints() const {
    auto counts = joint_counts();
    std::vector<int> missing;
    for (int j = 0; j < joints; ++j)
        if (counts[static_cast<size_t>(j)] == 0) missing.push_back(j);
    return missing;
}

ConstraintReport validate_constraints(const AssignmentMatrix& s, const SkeletonTopology& topo) {
    ConstraintReport report;
    if (s.joints != topo.joint_count()) {
        report.violations.push_back("joint count mismatch between matrix and topology");
        return report;
    }

    report.eq3_ok = true;
    for (int p = 0; p < s.grid.cells(); ++p) {
        int sum = 0;
        for (int j = 0; j < s.joints; ++j) sum += s.at(p, j);
        if (sum != 1) {
            report.eq3_ok = false;
            report.violations.push_back("row " + std::to_string(p) + " has " + std::to_string(sum) +
                                        " ones (must be exactly 1)");
        }
    }

    // Non-wrapping 4-neighborhood adjacency for every skeleton edge.
    auto holds = [&](int row, int col, int joint) {
        return row >= 0 && row < s.grid.rows && col >= 0 && col < s.grid.cols &&
               s.at(s.cell_index(row, col), joint) != 0;
    };
    report.eq2_ok = true;
    for (auto [a, b] : topo.edges) {
        bool adjacent = false;
        for (int r = 0; r < s.grid.rows && !adjacent; ++r)
            for (int c = 0; c < s.grid.cols && !adjacent; ++c) {
                if (!holds(r, c, a)) continue;
                adjacent = holds(r - 1, c, b) || holds(r + 1, c, b) || holds(r, c - 1, b) || holds(r, c + 1, b);
            }
        if (!adjacent) {
            report.eq2_ok = false;
            report.violations.push_back("edge (" + topo.joint_names[static_cast<size_t>(a)] + "," +
                                        topo.joint_names[static_cast<size_t>(b)] + ") not adjacent on the grid");
        }
    }
    return report;
}

std::pair<int, int> handcrafted_anchor_cell() { return {4, 2}; }

AssignmentMatrix build_handcrafted_layout(const SkeletonTopology& topo, const GridSpec& spec) {
    const SkeletonTopology canonical = canonical_h36m17();
    if (!(spec == GridSpec{5, 5}) || !topo.same_joints(canonical) || topo.edges != canonical.edges)
        throw std::invalid_argument(
            "build_handcrafted_layout: only the canonical 17-joint skeleton on a 5x5 grid is shipped; "
            "supply a layout file for other topology/grid pairs");

    // Columns are kinematic chains, mirrored left/right around the spine
    // column; the torso anchors the bottom-center cell.
    static const char* kLayout[5][5] = {
        {"r_wrist", "r_elbow", "head", "l_elbow", "l_wrist"},
        {"r_elbow", "r_shoulder", "neck", "l_shoulder", "l_elbow"},
        {"r_shoulder", "thorax", "thorax", "thorax", "l_shoulder"},
        {"r_ankle", "r_knee", "spine", "l_knee", "l_ankle"},
        {"r_knee", "r_hip", "torso", "l_hip", "l_knee"},
    };

    AssignmentMatrix s(spec, topo.joint_count());
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            const int j = topo.index_of(kLayout[r][c]);
            if (j < 0) throw std::invalid_argument("build_handcrafted_layout: unknown joint name");
            s.at(s.cell_index(r, c), j) = 1;
        }
    return s;
}

AssignmentMatrix random_sgt(const SkeletonTopology& topo, const GridSpec& spec, Rng& rng) {
    const int j = topo.joint_count();
    const int cells = spec.cells();
    if (cells < j)
        throw std::invalid_argument("random_sgt: grid has " + std::to_string(cells) + " cells for " +
                                    std::to_string(j) + " joints");
    // A uniformly random injection covers every joint once; leftover cells
    // draw joints i.i.d. uniform.
    std::vector<int> cell_order(static_cast<size_t>(cells));
    std::iota(cell_order.begin(), cell_order.end(), 0);
    rng.shuffle(cell_order);

    AssignmentMatrix s(spec, j);
    std::vector<int> cell_joint(static_cast<size_t>(cells), -1);
    for (int joint = 0; joint < j; ++joint) cell_joint[static_cast<size_t>(cell_order[static_cast<size_t>(joint)])] = joint;
    for (int p = 0; p < cells; ++p) {
        if (cell_joint[static_cast<size_t>(p)] < 0) cell_joint[static_cast<size_t>(p)] = rng.uniform_int(j);
        s.at(p, cell_joint[static_cast<size_t>(p)]) = 1;
    }
    return s;
}

ShuffleMode shuffle_mode_from_string(const std::string& s) {
    if (s == "row") return ShuffleMode::Row;
    if (s == "column") return ShuffleMode::Column;
    if (s == "global") return ShuffleMode::Global;
    throw std::invalid_argument("unknown shuffle mode: " + s);
}

AssignmentMatrix shuffle_layout(const AssignmentMatrix& s, ShuffleMode mode, Rng& rng) {
    AssignmentMatrix out(s.grid, s.joints);
    const int rows = s.grid.rows, cols = s.grid.cols;
    auto copy_cell = [&](int dst, int src) {
        for (int j = 0; j < s.joints; ++j) out.s[static_cast<size_t>(dst) * s.joints + j] = s.at(src, j);
    };
    if (mode == ShuffleMode::Row) {
        std::vector<int> perm(static_cast<size_t>(rows));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) copy_cell(out.cell_index(r, c), s.cell_index(perm[static_cast<size_t>(r)], c));
    } else if (mode == ShuffleMode::Column) {
        std::vector<int> perm(static_cast<size_t>(cols));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) copy_cell(out.cell_index(r, c), s.cell_index(r, perm[static_cast<size_t>(c)]));
    } else {
        std::vector<int> perm(static_cast<size_t>(s.grid.cells()));
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (int p = 0; p < s.grid.cells(); ++p) copy_cell(p, perm[static_cast<size_t>(p)]);
    }
    return out;
}

Tensor sgt_forward(const AssignmentMatrix& s, const Tensor& g) {
    if (g.ndim() != 2 || g.dim(0) != s.joints)
        throw std::invalid_argument("sgt_forward: pose shape " + shape_str(g.shape) + " does not match " +
                                    std::to_string(s.joints) + " joints");
    const int c = g.dim(1);
    Tensor d({s.grid.rows, s.grid.cols, c});
    for (int p = 0; p < s.grid.cells(); ++p) {
        const int j = s.joint_of_cell(p);
        if (j < 0) throw std::invalid_argument("sgt_forward: row " + std::to_string(p) + " is not one-hot");
        for (int ch = 0; ch < c; ++ch) d.v[static_cast<size_t>(p) * c + ch] = g.at(j, ch);
    }
    return d;
}

Tensor sgt_inverse(const AssignmentMatrix& s, const Tensor& d) {
    if (d.ndim() != 3 || d.dim(0) != s.grid.rows || d.dim(1) != s.grid.cols)
        throw std::invalid_argument("sgt_inverse: grid shape mismatch " + shape_str(d.shape));
    const auto missing = s.uncovered_joints();
    if (!missing.empty()) {
        std::string msg = "sgt_inverse: joints without any assigned cell:";
        for (int j : missing) msg += " " + std::to_string(j);
        msg += " (coverage " + std::to_string(s.joints - static_cast<int>(missing.size())) + "/" +
               std::to_string(s.joints) + ")";
        throw std::invalid_argument(msg);
    }
    const int c = d.dim(2);
    Tensor g({s.joints, c});
    const auto counts = s.joint_counts();
    for (int j = 0; j < s.joints; ++j) {
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            double first = 0.0;
            bool all_equal = true;
            bool seen = false;
            for (int p = 0; p < s.grid.cells(); ++p) {
                if (!s.at(p, j)) continue;
                const double val = d.v[static_cast<size_t>(p) * c + ch];
                if (!seen) {
                    first = val;
                    seen = true;
                } else if (val != first) {
                    all_equal = false;
                }
                sum += val;
            }
            // The mean of identical replicas is that value, exactly.
            g.at(j, ch) = all_equal ? first : sum / counts[static_cast<size_t>(j)];
        }
    }
    return g;
}

Tensor sgt_inverse_backward(const AssignmentMatrix& s, const Tensor& grad_g) {
    const int c = grad_g.dim(1);
    const auto counts = s.joint_counts();
    Tensor gd({s.grid.rows, s.grid.cols, c});
    for (int p = 0; p < s.grid.cells(); ++p) {
        const int j = s.joint_of_cell(p);
        for (int ch = 0; ch < c; ++ch)
            gd.v[static_cast<size_t>(p) * c + ch] = grad_g.at(j, ch) / counts[static_cast<size_t>(j)];
    }
    return gd;
}

Tensor sgt_forward_grad_s(const Tensor& grad_d, const Tensor& g) {
    const int cells = grad_d.dim(0) * grad_d.dim(1);
    const int c = grad_d.dim(2);
    const int joints = g.dim(0);
    Tensor gs({cells, joints});
    for (int p = 0; p < cells; ++p)
        for (int j = 0; j < joints; ++j) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += grad_d.v[static_cast<size_t>(p) * c + ch] * g.at(j, ch);
            gs.at(p, j) = acc;
        }
    return gs;
}

Tensor sgt_inverse_grad_s(const AssignmentMatrix& s, const Tensor& grad_g, const Tensor& d,
                          const Tensor& g_out) {
    const int cells = s.grid.cells();
    const int c = d.dim(2);
    const auto counts = s.joint_counts();
    Tensor gs({cells, s.joints});
    for (int p = 0; p < cells; ++p)
        for (int j = 0; j < s.joints; ++j) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch)
                acc += grad_g.at(j, ch) * (d.v[static_cast<size_t>(p) * c + ch] - g_out.at(j, ch));
            gs.at(p, j) = acc / counts[static_cast<size_t>(j)];
        }
    return gs;
}

namespace {

AssignmentMatrix argmax_rows(const Tensor& s_soft, GridSpec grid, int joints) {
    AssignmentMatrix s(grid, joints);
    for (int p = 0; p < grid.cells(); ++p) {
        int best = 0;
        for (int j = 1; j < joints; ++j)
            if (s_soft.at(p, j) > s_soft.at(p, best)) best = j;  // ties keep the lowest index
        s.at(p, best) = 1;
    }
    return s;
}

}  // namespace

AutoGridsSample autogrids_sample(const AutoGridsState& state, Rng& rng, int epoch) {
    AutoGridsSample out;
    out.s_soft = state.s_prob.t;
    out.s_soft.grad.clear();
    if (state.noise_enabled && epoch < state.noise_cutoff_epoch) {
        for (double& x : out.s_soft.v) x += state.temperature * rng.gumbel();
    }
    out.s = argmax_rows(out.s_soft, state.grid, state.joints);
    return out;
}

AutoGridsSample autogrids_argmax(const AutoGridsState& state) {
    AutoGridsSample out;
    out.s_soft = state.s_prob.t;
    out.s_soft.grad.clear();
    out.s = argmax_rows(out.s_soft, state.grid, state.joints);
    return out;
}

Tensor ste_backward(const Tensor& grad_s) {
    Tensor out = grad_s;
    out.grad.clear();
    return out;
}

AutoGridsState init_autogrids(const AssignmentMatrix* seed_layout, const GridSpec& spec, int joints,
                              Rng& rng) {
    AutoGridsState state;
    state.grid = spec;
    state.joints = joints;
    Tensor prob({spec.cells(), joints});
    if (seed_layout) {
        if (!(seed_layout->grid == spec) || seed_layout->joints != joints)
            throw std::invalid_argument("init_autogrids: seed layout shape mismatch");
        for (int p = 0; p < spec.cells(); ++p)
            for (int j = 0; j < joints; ++j)
                prob.at(p, j) = seed_layout->at(p, j) ? 1.0 : rng.uniform(0.0, 0.01);
    } else {
        for (double& x : prob.v) x = rng.uniform(0.01, 1.0);
    }
    state.s_prob = Parameter(std::move(prob));
    return state;
}

void save_layout_csv(const AssignmentMatrix& s, const SkeletonTopology& topo, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write layout file: " + path);
    out << "row,col,joint_name\n";
    for (int r = 0; r < s.grid.rows; ++r)
        for (int c = 0; c < s.grid.cols; ++c) {
            const int j = s.joint_of_cell(s.cell_index(r, c));
            if (j < 0) throw std::invalid_argument("save_layout_csv: row " + std::to_string(s.cell_index(r, c)) +
                                                   " is not one-hot");
            out << r << "," << c << "," << topo.joint_names[static_cast<size_t>(j)] << "\n";
        }
    const auto counts = s.joint_counts();
    const int covered = s.joints - static_cast<int>(s.uncovered_joints().size());
    out << "# coverage " << covered << "/" << s.joints << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

AssignmentMatrix load_layout_csv(const std::string& path, const SkeletonTopology& topo) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout file: " + path);

    struct Entry {
        int row, col, joint;
    };
    std::vector<Entry> entries;
    int max_row = -1, max_col = -1;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        csv::strip_eol(line);
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen && line == "row,col,joint_name") {
            header_seen = true;
            continue;
        }
        auto fields = csv::split(line);
        if (fields.size() != 3)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected row,col,joint_name");
        const std::string ctx = path + ":" + std::to_string(line_no);
        Entry e;
        e.row = static_cast<int>(csv::parse_long(fields[0], ctx));
        e.col = static_cast<int>(csv::parse_long(fields[1], ctx));
        e.joint = topo.index_of(fields[2]);
        if (e.joint < 0) throw std::runtime_error(ctx + ": unknown joint '" + fields[2] + "'");
        if (e.row < 0 || e.col < 0) throw std::runtime_error(ctx + ": negative cell index");
        max_row = std::max(max_row, e.row);
        max_col = std::max(max_col, e.col);
        entries.push_back(e);
    }
    if (entries.empty()) throw std::runtime_error(path + ": no layout entries");

    AssignmentMatrix s(GridSpec{max_row + 1, max_col + 1}, topo.joint_count());
    std::vector<uint8_t> seen(static_cast<size_t>(s.grid.cells()), 0);
    for (const auto& e : entries) {
        const int p = s.cell_index(e.row, e.col);
        if (seen[static_cast<size_t>(p)])
            throw std::runtime_error(path + ": duplicate cell (" + std::to_string(e.row) + "," +
                                     std::to_string(e.col) + ")");
        seen[static_cast<size_t>(p)] = 1;
        s.at(p, e.joint) = 1;
    }
    for (int p = 0; p < s.grid.cells(); ++p)
        if (!seen[static_cast<size_t>(p)])
            throw std::runtime_error(path + ": cell " + std::to_string(p) + " missing from layout");
    return s;
}

void dump_autogrids_csv(const AutoGridsState& state, const SkeletonTopology& topo,
                        const std::string& prob_path, const std::string& log_path) {
    auto write = [&](const std::string& path, bool log_values) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write: " + path);
        out << "cell";
        for (const auto& name : topo.joint_names) out << "," << name;
        out << "\n";
        for (int p = 0; p < state.grid.cells(); ++p) {
            out << p;
            for (int j = 0; j < state.joints; ++j) {
                const double x = state.s_prob.t.at(p, j);
                out << "," << csv::fmt(log_values ? std::log(x) : x);
            }
            out << "\n";
        }
        if (!out) throw std::runtime_error("write failed: " + path);
    };
    write(prob_path, false);
    write(log_path, true);
}

}  // namespace gridpose
