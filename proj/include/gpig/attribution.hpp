#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gpig/core.hpp"
#include "gpig/rng.hpp"

namespace gpig {

// Gradient source indexed by evaluation number, so minibatch schedules can
// rotate data between path steps while staying pure per index.
struct GradientOracle {
  int dimension = 0;
  std::string description;
  std::function<EvalResult(int eval_index, const FeatureMask&)> eval;
};

inline GradientOracle oracle_from(const DifferentiableObjective& objective) {
  GradientOracle o;
  o.dimension = objective.dimension();
  o.description = objective.description();
  o.eval = [objective](int, const FeatureMask& mask) {
    return objective.value_and_gradient(mask);
  };
  return o;
}

namespace detail {

inline void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Midpoint-rule integral of the gradient along t -> 1_S + t 1_{S-bar},
// restricted to unselected coordinates. Steps may evaluate concurrently; the
// reduction is a fixed-order sum over the step index.
inline Vec path_integral_scores(const GradientOracle& oracle,
                                const SelectionState& selection, int steps,
                                int eval_index_base, int threads) {
  const int n = oracle.dimension;
  std::vector<Vec> per_step(steps);
  parallel_for(steps, threads, [&](int k) {
    const double t = (k + 0.5) / steps;
    Vec m(n);
    for (int i = 0; i < n; ++i) m[i] = selection.contains(i) ? 1.0 : t;
    per_step[k] = oracle.eval(eval_index_base + k, FeatureMask(std::move(m))).gradient;
  });
  Vec acc(n, 0.0);
  for (int k = 0; k < steps; ++k)
    for (int i = 0; i < n; ++i)
      if (!selection.contains(i)) acc[i] += per_step[k][i];
  const double inv = 1.0 / steps;
  for (double& v : acc) v *= inv;
  return acc;
}

// Single gradient at the selection point 1_S (Sequential Gradient rule).
inline Vec endpoint_scores(const GradientOracle& oracle,
                           const SelectionState& selection, int eval_index) {
  const int n = oracle.dimension;
  Vec m(n);
  for (int i = 0; i < n; ++i) m[i] = selection.contains(i) ? 1.0 : 0.0;
  Vec g = oracle.eval(eval_index, FeatureMask(std::move(m))).gradient;
  for (int i = 0; i < n; ++i)
    if (selection.contains(i)) g[i] = 0.0;
  return g;
}

// Top-z unselected indices by the ranking mode; ties go to the lower index.
inline std::vector<int> top_candidates(const Vec& scores,
                                       const SelectionState& selection, int z,
                                       RankingMode mode) {
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!selection.contains(i)) candidates.push_back(i);
  auto key = [&](int i) {
    return mode == RankingMode::kAbsolute ? std::abs(scores[i]) : scores[i];
  };
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](int a, int b) { return key(a) > key(b); });
  if (static_cast<int>(candidates.size()) > z) candidates.resize(z);
  return candidates;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One-shot integrated gradients
// ---------------------------------------------------------------------------

// scores_i = (1/T) sum_k grad_i g(((k+0.5)/T) * 1); the (x - x0) weighting
// lives inside g. Order is the full ranking under the mode.
inline AttributionResult integrated_gradients(const GradientOracle& oracle,
                                              int steps,
                                              RankingMode mode = RankingMode::kAbsolute,
                                              int threads = 1) {
  if (steps < 1) throw RangeError("integrated_gradients: steps must be >= 1");
  SelectionState empty(oracle.dimension);
  AttributionResult result;
  result.scores = detail::path_integral_scores(oracle, empty, steps, 0, threads);
  result.order = ranked_order(result.scores, mode);
  result.gradient_evals = steps;
  return result;
}

inline AttributionResult integrated_gradients(const DifferentiableObjective& objective,
                                              int steps,
                                              RankingMode mode = RankingMode::kAbsolute,
                                              int threads = 1) {
  return integrated_gradients(oracle_from(objective), steps, mode, threads);
}

// ---------------------------------------------------------------------------
// Greedy PIG and Sequential Gradient
// ---------------------------------------------------------------------------

namespace detail {

inline AttributionResult adaptive_selection(const GradientOracle& oracle,
                                            const AlgoConfig& config,
                                            bool endpoint_rule) {
  config.validate();
  const int n = oracle.dimension;
  SelectionState selection(n);
  AttributionResult result;
  result.scores.assign(n, 0.0);
  int eval_index = 0;
  for (int round = 1; round <= config.rounds; ++round) {
    if (selection.count() == n) break;
    Vec candidate;
    if (endpoint_rule) {
      candidate = endpoint_scores(oracle, selection, eval_index);
      eval_index += 1;
    } else {
      candidate = path_integral_scores(oracle, selection, config.steps,
                                       eval_index, config.threads);
      eval_index += config.steps;
    }
    std::vector<int> chosen = top_candidates(candidate, selection,
                                             config.per_round, config.ranking);
    for (int idx : chosen) {
      result.scores[idx] += candidate[idx];
      if (candidate[idx] < 0.0) ++result.negative_selected;
      selection.add(idx);
      result.order.push_back(idx);
    }
    RoundRecord record;
    record.round = round;
    record.candidate_scores = std::move(candidate);
    record.chosen = std::move(chosen);
    record.selected_total = selection.count();
    result.rounds.push_back(std::move(record));
  }
  result.gradient_evals = eval_index;
  return result;
}

}  // namespace detail

// Adaptive rounds of path integrated gradients: integrate over unselected
// coordinates, freeze the per-round top-z at 1, accumulate their scores.
inline AttributionResult greedy_pig(const GradientOracle& oracle,
                                    const AlgoConfig& config) {
  return detail::adaptive_selection(oracle, config, /*endpoint_rule=*/false);
}

inline AttributionResult greedy_pig(const DifferentiableObjective& objective,
                                    const AlgoConfig& config) {
  return greedy_pig(oracle_from(objective), config);
}

// Greedy PIG with the round integral replaced by one gradient at 1_S.
inline AttributionResult sequential_gradient(const GradientOracle& oracle,
                                             int rounds, int per_round,
                                             RankingMode ranking = RankingMode::kSigned) {
  AlgoConfig config;
  config.rounds = rounds;
  config.per_round = per_round;
  config.steps = 1;
  config.ranking = ranking;
  return detail::adaptive_selection(oracle, config, /*endpoint_rule=*/true);
}

inline AttributionResult sequential_gradient(const DifferentiableObjective& objective,
                                             int rounds, int per_round,
                                             RankingMode ranking = RankingMode::kSigned) {
  return sequential_gradient(oracle_from(objective), rounds, per_round, ranking);
}

// ---------------------------------------------------------------------------
// Group (block) selection
// ---------------------------------------------------------------------------

inline void validate_partition(const std::vector<std::vector<int>>& groups, int n) {
  std::vector<int> count(n, 0);
  for (const auto& g : groups)
    for (int idx : g) {
      if (idx < 0 || idx >= n)
        throw IndexError("group member " + std::to_string(idx) +
                         " out of range for n = " + std::to_string(n));
      ++count[idx];
    }
  std::string uncovered, duplicated;
  for (int i = 0; i < n; ++i) {
    if (count[i] == 0) uncovered += (uncovered.empty() ? "" : ",") + std::to_string(i);
    if (count[i] > 1) duplicated += (duplicated.empty() ? "" : ",") + std::to_string(i);
  }
  if (!uncovered.empty() || !duplicated.empty())
    throw IndexError("group spec is not a partition; uncovered=[" + uncovered +
                     "] duplicated=[" + duplicated + "]");
}

// Per round: compute candidate scores as greedy_pig, rank unselected groups by
// the sum of scores over members, freeze every member of the top-z groups.
inline AttributionResult greedy_pig_groups(const GradientOracle& oracle,
                                           const AlgoConfig& config) {
  config.validate();
  if (!config.groups) throw RangeError("greedy_pig_groups: config.groups missing");
  const int n = oracle.dimension;
  const auto& groups = *config.groups;
  validate_partition(groups, n);
  SelectionState selection(n);
  std::vector<uint8_t> group_done(groups.size(), 0);
  AttributionResult result;
  result.scores.assign(n, 0.0);
  int eval_index = 0;
  for (int round = 1; round <= config.rounds; ++round) {
    if (selection.count() == n) break;
    Vec candidate = detail::path_integral_scores(oracle, selection, config.steps,
                                                 eval_index, config.threads);
    eval_index += config.steps;
    std::vector<int> open;
    for (size_t g = 0; g < groups.size(); ++g)
      if (!group_done[g]) open.push_back(static_cast<int>(g));
    auto group_score = [&](int g) {
      double s = 0.0;
      for (int idx : groups[g]) s += candidate[idx];
      return config.ranking == RankingMode::kAbsolute ? std::abs(s) : s;
    };
    std::stable_sort(open.begin(), open.end(),
                     [&](int a, int b) { return group_score(a) > group_score(b); });
    if (static_cast<int>(open.size()) > config.per_round)
      open.resize(config.per_round);
    RoundRecord record;
    record.round = round;
    record.candidate_scores = candidate;
    for (int g : open) {
      group_done[g] = 1;
      std::vector<int> members = groups[g];
      std::sort(members.begin(), members.end());
      for (int idx : members) {
        result.scores[idx] += candidate[idx];
        if (candidate[idx] < 0.0) ++result.negative_selected;
        selection.add(idx);
        result.order.push_back(idx);
        record.chosen.push_back(idx);
      }
    }
    record.selected_total = selection.count();
    result.rounds.push_back(std::move(record));
  }
  result.gradient_evals = eval_index;
  return result;
}

inline AttributionResult greedy_pig_groups(const DifferentiableObjective& objective,
                                           const AlgoConfig& config) {
  return greedy_pig_groups(oracle_from(objective), config);
}

// ---------------------------------------------------------------------------
// Minibatch schedule
// ---------------------------------------------------------------------------

// Seeded shuffle of batch indices split into contiguous groups whose sizes
// differ by at most one. One group per gradient evaluation.
struct MinibatchSchedule {
  int total_batches = 0;
  int gradient_evaluations = 0;
  std::vector<std::vector<int>> groups;
};

inline MinibatchSchedule build_minibatch_schedule(int n_batches, int g_evals,
                                                  uint64_t seed) {
  if (g_evals < 1) throw RangeError("minibatch schedule: g_evals must be >= 1");
  if (g_evals > n_batches)
    throw RangeError("minibatch schedule: g_evals = " + std::to_string(g_evals) +
                     " exceeds n_batches = " + std::to_string(n_batches));
  std::vector<int> order(n_batches);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).substream("minibatch-schedule");
  rng.shuffle(order);
  MinibatchSchedule schedule;
  schedule.total_batches = n_batches;
  schedule.gradient_evaluations = g_evals;
  const int base = n_batches / g_evals;
  const int extra = n_batches % g_evals;
  int pos = 0;
  for (int g = 0; g < g_evals; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    schedule.groups.emplace_back(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return schedule;
}

}  // namespace gpig
