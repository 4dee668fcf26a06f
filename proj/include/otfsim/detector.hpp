#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "otfsim/beamformer.hpp"
#include "otfsim/constellation.hpp"
#include "otfsim/types.hpp"

namespace otfsim {

struct DetectorConfig {
  /// Weight of the freshly computed pmf in the damped update; 1 disables
  /// damping.
  double damping = 0.5;
  /// A node counts as converged when its largest joint posterior reaches
  /// 1 - indicator_slack.
  double indicator_slack = 0.01;
  /// Stop when the convergence indicator drops this far below its best value.
  double backtrack_slack = 0.2;
  int max_iterations = 30;
  /// Channel entries at or below this magnitude are excluded from the graph.
  double support_threshold = 1.0e-5;
  /// Lower bound applied to interference variances before dividing.
  double variance_floor = 1.0e-12;
};

struct DetectionResult {
  /// Constellation index per delay-Doppler node, taken from the iteration
  /// with the best convergence indicator.
  std::vector<int> decisions;
  /// Winning joint posterior probability per node at that iteration.
  std::vector<double> confidence;
  int iterations = 0;
  std::vector<double> indicator_trace;
  /// Message updates per iteration: alphabet size x edge count, counted once
  /// per edge per message direction.
  std::vector<std::uint64_t> ops_per_iteration;
  std::uint64_t total_ops = 0;
  /// Nodes that had no channel support in any branch (posterior left
  /// uniform).
  int uncovered_nodes = 0;
};

/// Bipartite graph between observation nodes (rows of each branch channel)
/// and symbol nodes (columns), one subgraph per branch. Edges follow each
/// branch's thresholded support, with per-edge channel coefficients in
/// structure-of-array form for the message loops. When the alphabet is a
/// row-major product grid (square QAM), the per-axis coordinates are kept so
/// the likelihood loops can split each squared distance into two per-axis
/// quadratics instead of touching every symbol individually.
class FactorGraph {
 public:
  struct Branch {
    std::vector<int> row_offsets;  // mn + 1
    std::vector<int> row_cols;     // column per edge, row-major edge order
    std::vector<int> col_offsets;  // mn + 1
    std::vector<int> col_edges;    // row-major edge ids, grouped by column
    std::vector<int> col_rows;     // observation row per column-view slot
    cvec h;                        // channel coefficient per edge
    cvec y;
    double noise_variance = 0.0;
    int nnz = 0;
  };

  static FactorGraph build(std::span<const BranchObservation> branches,
                           const Constellation& constellation);

  int num_nodes() const { return mn_; }
  int alphabet_size() const { return q_; }
  int num_branches() const { return static_cast<int>(branches_.size()); }
  const Branch& branch(int p) const { return branches_[p]; }
  const Constellation& constellation() const { return *constellation_; }
  std::uint64_t total_edges() const;

  /// Side length of the product grid, or 0 when the alphabet is not laid out
  /// as one (point j then has coordinates axis_re[j / side], axis_im[j %
  /// side]).
  int grid_side() const { return side_; }
  const std::vector<double>& axis_re() const { return axis_re_; }
  const std::vector<double>& axis_im() const { return axis_im_; }
  const std::vector<double>& point_re() const { return pt_re_; }
  const std::vector<double>& point_im() const { return pt_im_; }
  const std::vector<double>& point_energy() const { return pt_e2_; }

 private:
  int mn_ = 0;
  int q_ = 0;
  int side_ = 0;
  const Constellation* constellation_ = nullptr;
  std::vector<double> axis_re_, axis_im_;
  std::vector<double> pt_re_, pt_im_, pt_e2_;
  std::vector<Branch> branches_;
};

/// Message state for one detection run. pmf holds the damped symbol pmfs per
/// edge (row-major edge order, q entries per edge); mu/var hold the latest
/// Gaussian interference messages per edge; node_logpost holds each branch's
/// unnormalized per-node log-posterior from the latest variable-side update.
struct MessageState {
  struct Branch {
    std::vector<double> pmf;
    cvec mu;
    std::vector<double> var;
    std::vector<double> node_logpost;  // mn * q
  };
  std::vector<Branch> branches;
  std::vector<double> njp;  // mn * q, normalized joint posterior

  static MessageState init(const FactorGraph& graph);
};

/// Observation-side update for one branch: per edge, the Gaussian mean and
/// variance of the interference seen at the edge's observation node when the
/// edge's own symbol is excluded. Uses the current pmfs in `state`.
void obs_to_var(const FactorGraph& graph, MessageState& state, int branch);

/// Likelihood phase of the variable-side update for one branch: refreshes
/// the branch's per-node log-posteriors (the sum of the branch's per-edge
/// Gaussian log-likelihoods under the current interference messages).
void var_to_obs_likelihoods(const FactorGraph& graph, MessageState& state,
                            int branch, const DetectorConfig& cfg);

/// Pmf phase of the variable-side update for one branch: per edge, the
/// damped extrinsic symbol pmf. A node's evidence is pooled across every
/// branch (the sum of all branches' node log-posteriors), and only the
/// edge's own observation row is excluded, so each branch's interference
/// estimates are steered by the combined posterior rather than by its own
/// observations alone. The excluded row's likelihoods are recomputed from
/// the same interference messages the likelihood phase saw.
void var_to_obs_update(const FactorGraph& graph, MessageState& state,
                       int branch, const DetectorConfig& cfg);

/// Variable-side update for one branch: both phases back to back. With a
/// single branch this is the classic extrinsic pmf update; in a multi-branch
/// graph detect_mp_mrc runs the likelihood phase of every branch before any
/// pmf phase so that updates see every branch at the same iteration.
void var_to_obs(const FactorGraph& graph, MessageState& state, int branch,
                const DetectorConfig& cfg);

/// Normalized product of per-branch posteriors for every node, written to
/// state.njp. Combination runs in the log domain.
void fuse_branch_posteriors(const FactorGraph& graph, MessageState& state);

/// Normalized elementwise product of probability vectors. Returns a uniform
/// pmf when the product vanishes everywhere.
std::vector<double> njp_combine(
    std::span<const std::vector<double>> posteriors);

/// Fraction of nodes whose largest joint posterior reaches 1 - slack.
double convergence_indicator(const std::vector<double>& njp, int num_nodes,
                             int alphabet_size, double slack);

/// Joint message-passing detector with maximum-ratio combining across beam
/// branches: per iteration every branch runs an observation-side and a
/// variable-side update, branch posteriors are fused into normalized joint
/// posteriors, and the convergence indicator decides termination (full
/// convergence, backtrack below the best indicator, or the iteration cap).
DetectionResult detect_mp_mrc(std::span<const BranchObservation> branches,
                              const Constellation& constellation,
                              const DetectorConfig& cfg);

/// Exhaustive joint maximum-a-posteriori detector; returns per-node symbol
/// indices of the jointly optimal vector. Cost grows as |A|^(M*N), guarded
/// to tiny problems.
std::vector<int> map_oracle(std::span<const BranchObservation> branches,
                            const Constellation& constellation);

}  // namespace otfsim
