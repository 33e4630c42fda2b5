#pragma once

#include <cstdint>
#include <vector>

#include "maskgcd/knn.hpp"
#include "maskgcd/types.hpp"

namespace maskgcd {

// How neighbor votes are normalized before comparing against theta.
enum class ScoreNorm {
  kK,     // divide by the neighbor count k
  kMass,  // divide by the summed confidence of the k neighbors
};

struct PropagationConfig {
  double theta = 0.1;
  int max_iterations = 10;
  double convergence_eps = 1e-6;
  ScoreNorm score_norm = ScoreNorm::kK;
};

// Throws PARAM_ERROR unless 0 < theta < 1 and max_iterations >= 1.
void validate(const PropagationConfig& cfg);

// Confidence-weighted vote of the stored neighbors for each class in [0, num_classes).
// Pending neighbors vote for nothing.
std::vector<double> class_scores(const LabelState& state, const NeighborTable& table,
                                 size_t mask_index, int32_t num_classes,
                                 ScoreNorm norm = ScoreNorm::kK);

// Fraction of the k neighbors currently pending.
double pending_fraction(const LabelState& state, const NeighborTable& table, size_t mask_index);

// One synchronous round: every unlabeled mask is rescored from the previous state.
LabelState propagate_round(const DiscoveryInstance& instance, const LabelState& state,
                           const NeighborTable& table, const PropagationConfig& cfg);

struct PropagationStats {
  int rounds = 0;
  bool converged = false;
};

// Repeats propagate_round until nothing moves (labels equal, confidences within
// convergence_eps) or max_iterations rounds have run.
LabelState propagate(const DiscoveryInstance& instance, const LabelState& state,
                     const NeighborTable& table, const PropagationConfig& cfg,
                     PropagationStats* stats = nullptr);

// Pending masks are reset to confidence 1, then every pseudo-labeled unlabeled mask
// whose pending-neighbor fraction exceeds theta is returned to pending. Single pass.
LabelState structural_completion(const DiscoveryInstance& instance, const LabelState& state,
                                 const NeighborTable& table, const PropagationConfig& cfg);

}  // namespace maskgcd
