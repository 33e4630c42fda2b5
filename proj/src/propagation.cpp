#include "maskgcd/propagation.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "maskgcd/error.hpp"

namespace maskgcd {

void validate(const PropagationConfig& cfg) {
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) {
    throw Error(ErrorCode::kParamError, "theta must lie in (0,1), got " + std::to_string(cfg.theta));
  }
  if (cfg.max_iterations < 1) throw Error(ErrorCode::kParamError, "max_iterations must be >= 1");
  if (!(cfg.convergence_eps >= 0.0)) throw Error(ErrorCode::kParamError, "convergence_eps must be >= 0");
}

namespace {

void check_shapes(const DiscoveryInstance& instance, const LabelState& state, const NeighborTable& table) {
  if (state.size() != instance.size() || table.n != instance.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "state/table/instance sizes disagree: " + std::to_string(state.size()) + "/" +
                    std::to_string(table.n) + "/" + std::to_string(instance.size()));
  }
}

}  // namespace

std::vector<double> class_scores(const LabelState& state, const NeighborTable& table,
                                 size_t mask_index, int32_t num_classes, ScoreNorm norm) {
  std::vector<double> scores(static_cast<size_t>(num_classes), 0.0);
  double mass = 0.0;
  for (uint32_t j : table.indices(mask_index)) {
    const int32_t l = state.label[j];
    // Pending neighbors count as p = 0 toward the mass as well.
    if (l == kNovelPending) continue;
    mass += state.confidence[j];
    if (l >= 0 && l < num_classes) scores[static_cast<size_t>(l)] += state.confidence[j];
  }
  const double denom = norm == ScoreNorm::kK ? static_cast<double>(table.k) : mass;
  if (denom <= 0.0) {
    std::fill(scores.begin(), scores.end(), 0.0);
    return scores;
  }
  for (double& s : scores) s /= denom;
  return scores;
}

double pending_fraction(const LabelState& state, const NeighborTable& table, size_t mask_index) {
  size_t pending = 0;
  for (uint32_t j : table.indices(mask_index)) {
    if (state.label[j] == kNovelPending) ++pending;
  }
  return static_cast<double>(pending) / static_cast<double>(table.k);
}

LabelState propagate_round(const DiscoveryInstance& instance, const LabelState& state,
                           const NeighborTable& table, const PropagationConfig& cfg) {
  check_shapes(instance, state, table);
  LabelState next = state;
  const auto n = static_cast<int64_t>(instance.size());
#pragma omp parallel for schedule(static)
  for (int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<size_t>(ii);
    if (instance.is_labeled(i)) continue;
    const auto scores = class_scores(state, table, i, instance.k_base, cfg.score_norm);
    int32_t best = kNovelPending;
    double best_score = 0.0;
    for (size_t c = 0; c < scores.size(); ++c) {
      if (scores[c] > best_score) {  // strict: ties keep the lower class
        best_score = scores[c];
        best = static_cast<int32_t>(c);
      }
    }
    if (best != kNovelPending && best_score > cfg.theta) {
      next.label[i] = best;
      next.confidence[i] = best_score;
    } else {
      next.label[i] = kNovelPending;
      next.confidence[i] = 0.0;
    }
  }
  return next;
}

LabelState propagate(const DiscoveryInstance& instance, const LabelState& state,
                     const NeighborTable& table, const PropagationConfig& cfg, PropagationStats* stats) {
  validate(cfg);
  check_shapes(instance, state, table);
  LabelState current = state;
  PropagationStats local;
  for (int round = 1; round <= cfg.max_iterations; ++round) {
    LabelState next = propagate_round(instance, current, table, cfg);
    local.rounds = round;
    bool moved = next.label != current.label;
    for (size_t i = 0; !moved && i < next.size(); ++i) {
      moved = std::abs(next.confidence[i] - current.confidence[i]) > cfg.convergence_eps;
    }
    current = std::move(next);
    if (!moved) {
      local.converged = true;
      break;
    }
  }
  if (stats) *stats = local;
  return current;
}

LabelState structural_completion(const DiscoveryInstance& instance, const LabelState& state,
                                 const NeighborTable& table, const PropagationConfig& cfg) {
  validate(cfg);
  check_shapes(instance, state, table);
  LabelState snapshot = state;
  for (size_t i = 0; i < snapshot.size(); ++i) {
    if (!instance.is_labeled(i) && snapshot.label[i] == kNovelPending) snapshot.confidence[i] = 1.0;
  }
  LabelState next = snapshot;
  const auto n = static_cast<int64_t>(instance.size());
#pragma omp parallel for schedule(static)
  for (int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<size_t>(ii);
    if (instance.is_labeled(i) || snapshot.label[i] == kNovelPending) continue;
    if (pending_fraction(snapshot, table, i) > cfg.theta) {
      next.label[i] = kNovelPending;
      next.confidence[i] = 1.0;
    }
  }
  return next;
}

}  // namespace maskgcd
