#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridpose/optim.hpp"
#include "gridpose/skeleton.hpp"
#include "gridpose/tensor.hpp"

namespace gridpose {

struct GridSpec {
    int rows = 5;
    int cols = 5;
    int cells() const { return rows * cols; }
    bool operator==(const GridSpec& o) const { return rows == o.rows && cols == o.cols; }
};

/// Binary assignment matrix S (cells x joints) mapping skeleton joints onto
/// grid cells. Every constructor in this module produces one-hot rows; the
/// validator also accepts arbitrary binary matrices so violations can be
/// reported.
struct AssignmentMatrix {
    GridSpec grid;
    int joints = 0;
    std::vector<uint8_t> s;  // grid.cells() x joints, row-major

    AssignmentMatrix() = default;
    AssignmentMatrix(GridSpec g, int j) : grid(g), joints(j), s(static_cast<size_t>(g.cells()) * j, 0) {}

    uint8_t& at(int cell, int joint) { return s[static_cast<size_t>(cell) * joints + joint]; }
    uint8_t at(int cell, int joint) const { return s[static_cast<size_t>(cell) * joints + joint]; }
    int cell_index(int row, int col) const { return row * grid.cols + col; }

    /// Joint assigned to a cell, or -1 if the row is not one-hot.
    int joint_of_cell(int cell) const;
    bool rows_one_hot() const;
    std::vector<int> joint_counts() const;
    std::vector<int> uncovered_joints() const;
    bool covering() const { return uncovered_joints().empty(); }
    bool operator==(const AssignmentMatrix& o) const {
        return grid == o.grid && joints == o.joints && s == o.s;
    }
};

struct ConstraintReport {
    bool eq2_ok = false;  // every skeleton edge adjacent somewhere on the grid
    bool eq3_ok = false;  // every row one-hot
    std::vector<std::string> violations;
    bool ok() const { return eq2_ok && eq3_ok; }
};

/// Checks the two grid-layout constraints: one-hot rows, and for every
/// skeleton edge (i,j) some cell holding i whose non-wrapping 4-neighborhood
/// holds j. Report-only, never throws on violations.
ConstraintReport validate_constraints(const AssignmentMatrix& s, const SkeletonTopology& topo);

/// The shipped layout for the canonical 17-joint skeleton on a 5x5 grid:
/// torso anchored at the bottom-center cell, kinematic chains along columns,
/// peer joints mirrored across the center column. Rejects other
/// topology/grid pairs (supply a layout file for those).
AssignmentMatrix build_handcrafted_layout(const SkeletonTopology& topo, const GridSpec& spec);

/// Anchor cell (row, col) of the handcrafted 5x5 layout.
std::pair<int, int> handcrafted_anchor_cell();

/// Uniform random one-hot assignment covering every joint at least once.
AssignmentMatrix random_sgt(const SkeletonTopology& topo, const GridSpec& spec, Rng& rng);

enum class ShuffleMode { Row, Column, Global };
ShuffleMode shuffle_mode_from_string(const std::string& s);

/// Permutes grid rows, grid columns or all cells; one-hot rows preserved.
AssignmentMatrix shuffle_layout(const AssignmentMatrix& s, ShuffleMode mode, Rng& rng);

/// Grid pose D = S * G reshaped to rows x cols x C.
Tensor sgt_forward(const AssignmentMatrix& s, const Tensor& g);

/// Inverse transform: per joint, the mean of all grid cells assigned to it
/// (normalized-transpose product). Requires every joint covered; throws with
/// a per-joint coverage report otherwise. The mean of identical replicas is
/// returned exactly.
Tensor sgt_inverse(const AssignmentMatrix& s, const Tensor& d);

/// Gradient of sgt_inverse output w.r.t. its grid input.
Tensor sgt_inverse_backward(const AssignmentMatrix& s, const Tensor& grad_g);

/// Gradient of the loss w.r.t. S through the forward projection D = S*G.
Tensor sgt_forward_grad_s(const Tensor& grad_d, const Tensor& g);

/// Gradient of the loss w.r.t. S through the inverse transform, including
/// the replica-count normalizer.
Tensor sgt_inverse_grad_s(const AssignmentMatrix& s, const Tensor& grad_g, const Tensor& d,
                          const Tensor& g_out);

/// Learnable SGT state: continuous positive assignment scores S_prob plus
/// Gumbel-noise sampling settings. Trained with Adam through the
/// straight-through estimator.
struct AutoGridsState {
    GridSpec grid;
    int joints = 0;
    Parameter s_prob;  // cells x joints
    double temperature = 1.0;
    bool noise_enabled = true;
    int noise_cutoff_epoch = 30;
};

struct AutoGridsSample {
    Tensor s_soft;       // cells x joints
    AssignmentMatrix s;  // row-wise argmax one-hot
};

/// Samples a discrete assignment. With noise enabled and epoch below the
/// cutoff, S_soft = S_prob + temperature * Gumbel noise; otherwise
/// S_soft = S_prob. Rows discretize to the argmax, ties to the lowest
/// joint index.
AutoGridsSample autogrids_sample(const AutoGridsState& state, Rng& rng, int epoch);

/// Noise-free sample (deterministic row argmax of S_prob).
AutoGridsSample autogrids_argmax(const AutoGridsState& state);

/// Straight-through estimator: the gradient w.r.t. the discretized S passes
/// through the argmax unchanged.
Tensor ste_backward(const Tensor& grad_s);

/// Seeded init puts 1.0 on the seed layout's entries and Uniform(0, 0.01)
/// elsewhere; unseeded init draws all entries from Uniform(0.01, 1.0).
AutoGridsState init_autogrids(const AssignmentMatrix* seed_layout, const GridSpec& spec, int joints,
                              Rng& rng);

/// Layout CSV: `row,col,joint_name`, one line per cell in row-major order,
/// '#' comments permitted. Coverage is appended as a trailing comment.
void save_layout_csv(const AssignmentMatrix& s, const SkeletonTopology& topo, const std::string& path);
AssignmentMatrix load_layout_csv(const std::string& path, const SkeletonTopology& topo);

/// Writes S_prob and its natural log as matrix CSVs with joint-name headers.
void dump_autogrids_csv(const AutoGridsState& state, const SkeletonTopology& topo,
                        const std::string& prob_path, const std::string& log_path);

}  // namespace gridpose
