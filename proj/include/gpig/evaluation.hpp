#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gpig/attribution.hpp"
#include "gpig/core.hpp"
#include "gpig/objectives.hpp"
#include "gpig/rng.hpp"

namespace gpig {

// ---------------------------------------------------------------------------
// Subset oracles
// ---------------------------------------------------------------------------

struct SubsetResult {
  std::vector<int> subset;
  double value = 0.0;
};

// Exhaustive max over |S| = k; ties break to the lexicographically smallest
// set because combinations are visited in lexicographic order.
inline SubsetResult brute_force_best_subset(const SetFunctionView& view, int k) {
  const int n = view.dimension();
  if (k < 0 || k > n)
    throw RangeError("brute_force_best_subset: k = " + std::to_string(k) +
                     " outside [0," + std::to_string(n) + "]");
  if (n > 20)
    throw CapacityError("brute_force_best_subset: n = " + std::to_string(n) +
                        " exceeds 20; use greedy_subset instead");
  SubsetResult best;
  if (k == 0) {
    best.value = view.eval({});
    return best;
  }
  std::vector<int> comb(k);
  for (int i = 0; i < k; ++i) comb[i] = i;
  bool first = true;
  while (true) {
    const double v = view.eval(comb);
    if (first || v > best.value) {
      best.subset = comb;
      best.value = v;
      first = false;
    }
    int i = k - 1;
    while (i >= 0 && comb[i] == n - k + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
  }
  return best;
}

// k rounds of argmax marginal gain; ties go to the lower index.
inline std::vector<int> greedy_subset(const SetFunctionView& view, int k) {
  const int n = view.dimension();
  if (k < 0 || k > n)
    throw RangeError("greedy_subset: k = " + std::to_string(k) + " outside [0," +
                     std::to_string(n) + "]");
  std::vector<int> chosen;
  std::vector<uint8_t> used(n, 0);
  for (int round = 0; round < k; ++round) {
    int best = -1;
    double best_value = 0.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      chosen.push_back(i);
      const double v = view.eval(chosen);
      chosen.pop_back();
      if (best < 0 || v > best_value) {
        best = i;
        best_value = v;
      }
    }
    used[best] = 1;
    chosen.push_back(best);
  }
  return chosen;
}

inline Vec marginal_gains(const SetFunctionView& view) {
  const double empty = view.eval({});
  Vec gains(view.dimension());
  for (int i = 0; i < view.dimension(); ++i)
    gains[i] = view.eval({i}) - empty;
  return gains;
}

// ---------------------------------------------------------------------------
// Attribution quality and curves
// ---------------------------------------------------------------------------

struct QualityValue {
  double quality = 0.0;    // numerator/optimum, or numerator when flagged
  double numerator = 0.0;  // G of the order prefix
  double optimum = 0.0;    // brute-force best at the same k
  bool flagged = false;    // optimum <= 0, ratio not meaningful
};

inline QualityValue attribution_quality(const SetFunctionView& view,
                                        const std::vector<int>& order, int k) {
  const int n = view.dimension();
  if (k < 0 || k > n)
    throw RangeError("attribution_quality: k = " + std::to_string(k) +
                     " outside [0," + std::to_string(n) + "]");
  if (static_cast<int>(order.size()) < k)
    throw RangeError("attribution_quality: order length " +
                     std::to_string(order.size()) + " shorter than k = " +
                     std::to_string(k));
  QualityValue q;
  q.numerator = view.eval(std::vector<int>(order.begin(), order.begin() + k));
  q.optimum = brute_force_best_subset(view, k).value;
  if (q.optimum <= 0.0) {
    q.flagged = true;
    q.quality = q.numerator;
  } else {
    q.quality = q.numerator / q.optimum;
  }
  return q;
}

struct QualityCurve {
  std::vector<int> ks;
  Vec values;
  Vec optima;                    // filled when with_optimum
  std::vector<uint8_t> flagged;  // filled when with_optimum
  std::string normalization = "none";
};

struct CurveResult {
  QualityCurve curve;
  double auc = 0.0;
};

enum class CurveMetric { kRawValue, kKlToFull };

inline std::string to_string(CurveMetric m) {
  return m == CurveMetric::kRawValue ? "raw-G" : "KL";
}

// All k for n <= 64, otherwise 100 equally spaced levels (endpoints kept).
inline std::vector<int> default_k_grid(int n) {
  std::vector<int> ks;
  if (n <= 64) {
    for (int k = 0; k <= n; ++k) ks.push_back(k);
    return ks;
  }
  for (int i = 0; i <= 100; ++i) {
    const int k = static_cast<int>(std::llround(static_cast<double>(i) * n / 100.0));
    if (ks.empty() || ks.back() != k) ks.push_back(k);
  }
  return ks;
}

inline double trapezoid_auc(const std::vector<int>& ks, const Vec& values, int n) {
  double auc = 0.0;
  for (size_t i = 0; i + 1 < ks.size(); ++i) {
    const double dx = static_cast<double>(ks[i + 1] - ks[i]) / n;
    auc += 0.5 * dx * (values[i] + values[i + 1]);
  }
  return auc;
}

// Metric along the order prefix at each grid level; AUC by trapezoid over
// k/n in [0,1]. kRawValue reports G(prefix); kKlToFull reports
// G(full) - G(prefix), which is the KL divergence for the KL objective.
inline CurveResult curve_and_auc(const SetFunctionView& view,
                                 const std::vector<int>& order,
                                 CurveMetric metric,
                                 const std::vector<int>* k_grid = nullptr,
                                 bool with_optimum = false) {
  const int n = view.dimension();
  if (static_cast<int>(order.size()) != n)
    throw RangeError("curve_and_auc: order length " +
                     std::to_string(order.size()) +
                     " is not a full permutation of n = " + std::to_string(n));
  CurveResult out;
  out.curve.ks = k_grid ? *k_grid : default_k_grid(n);
  double full = 0.0;
  if (metric == CurveMetric::kKlToFull)
    full = view.eval(std::vector<int>(order.begin(), order.end()));
  for (int k : out.curve.ks) {
    if (k < 0 || k > n)
      throw RangeError("curve_and_auc: grid level " + std::to_string(k) +
                       " outside [0," + std::to_string(n) + "]");
    const double g =
        view.eval(std::vector<int>(order.begin(), order.begin() + k));
    out.curve.values.push_back(metric == CurveMetric::kKlToFull ? full - g : g);
    if (with_optimum) {
      const double opt = brute_force_best_subset(view, k).value;
      out.curve.optima.push_back(opt);
      out.curve.flagged.push_back(opt <= 0.0 ? 1 : 0);
    }
  }
  if (with_optimum) out.curve.normalization = "per-k-optimum";
  out.auc = trapezoid_auc(out.curve.ks, out.curve.values, n);
  return out;
}

// Per-k median across examples; curves must share one grid.
inline QualityCurve median_curves(const std::vector<QualityCurve>& curves) {
  if (curves.empty()) throw Error("median_curves: empty input");
  QualityCurve out;
  out.ks = curves.front().ks;
  for (const auto& c : curves)
    if (c.ks != out.ks) throw DimensionError("median_curves: mismatched grids");
  for (size_t i = 0; i < out.ks.size(); ++i) {
    Vec column;
    for (const auto& c : curves) column.push_back(c.values[i]);
    std::sort(column.begin(), column.end());
    const size_t m = column.size();
    out.values.push_back(m % 2 == 1
                             ? column[m / 2]
                             : 0.5 * (column[m / 2 - 1] + column[m / 2]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attribution-vs-marginal-gain bound
// ---------------------------------------------------------------------------

struct HessianEstimate {
  Matrix matrix;
  double step = 0.0;
};

// Central finite differences of the oracle gradient.
inline HessianEstimate estimate_hessian(const DifferentiableObjective& objective,
                                        const FeatureMask& point, double step) {
  const int n = objective.dimension();
  for (int i = 0; i < n; ++i)
    if (point[i] < step || point[i] > 1.0 - step)
      throw RangeError("estimate_hessian: point too close to the boundary");
  HessianEstimate est;
  est.step = step;
  est.matrix = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    Vec plus = point.values();
    Vec minus = point.values();
    plus[i] += step;
    minus[i] -= step;
    const Vec gp =
        objective.value_and_gradient(FeatureMask(std::move(plus))).gradient;
    const Vec gm =
        objective.value_and_gradient(FeatureMask(std::move(minus))).gradient;
    for (int j = 0; j < n; ++j)
      est.matrix(i, j) = (gp[j] - gm[j]) / (2.0 * step);
  }
  return est;
}

struct MarginalBoundReport {
  Vec ig_scores;
  Vec gains;
  Vec gaps;            // |IG_i - (G({i}) - G(0))|
  double bound = 0.0;  // (1/2) max over sampled w,i of |sum_{j != i} H_ij(w)|
};

namespace detail {

inline void bound_from_point(const DifferentiableObjective& objective,
                             const Vec& w, double step, double* bound) {
  const HessianEstimate est =
      estimate_hessian(objective, FeatureMask(w), step);
  const int n = objective.dimension();
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) off += est.matrix(i, j);
    *bound = std::max(*bound, 0.5 * std::abs(off));
  }
}

}  // namespace detail

// Gaps between one-shot attribution scores and marginal gains, with the
// second-order bound estimated on a 3^min(n,6) grid plus 50 seeded interior
// points. The bound is an estimate of a supremum, not an exact constant.
inline MarginalBoundReport pig_marginal_bound_check(
    const DifferentiableObjective& objective, int steps, double hessian_step) {
  const int n = objective.dimension();
  MarginalBoundReport report;
  report.ig_scores =
      integrated_gradients(objective, steps, RankingMode::kSigned).scores;
  SetFunctionView view(objective);
  report.gains = marginal_gains(view);
  report.gaps.resize(n);
  for (int i = 0; i < n; ++i)
    report.gaps[i] = std::abs(report.ig_scores[i] - report.gains[i]);

  const double lo = std::max(2.0 * hessian_step, 1e-3);
  const double hi = 1.0 - lo;
  const double levels[3] = {lo, 0.5, hi};
  const int gridded = std::min(n, 6);
  long grid_points = 1;
  for (int i = 0; i < gridded; ++i) grid_points *= 3;
  for (long p = 0; p < grid_points; ++p) {
    Vec w(n, 0.5);
    long rest = p;
    for (int i = 0; i < gridded; ++i) {
      w[i] = levels[rest % 3];
      rest /= 3;
    }
    detail::bound_from_point(objective, w, hessian_step, &report.bound);
  }
  Rng rng = Rng(20240331ull).substream("hessian-grid");
  for (int p = 0; p < 50; ++p) {
    Vec w(n);
    for (int i = 0; i < n; ++i) w[i] = rng.uniform(lo, hi);
    detail::bound_from_point(objective, w, hessian_step, &report.bound);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pointing game
// ---------------------------------------------------------------------------

struct PointingCase {
  AttributionResult result;
  std::vector<std::vector<int>> regions;
  int target_region = 0;
};

// Fraction of cases whose top-k attributed features (absolute ranking) fall
// in the target region by a strict majority. An exact half is a failure.
inline double pointing_accuracy(const std::vector<PointingCase>& cases,
                                int top_k) {
  if (cases.empty()) throw Error("pointing_accuracy: empty case list");
  int positives = 0;
  for (const auto& c : cases) {
    const int n = static_cast<int>(c.result.scores.size());
    if (top_k > n)
      throw RangeError("pointing_accuracy: top_k = " + std::to_string(top_k) +
                       " exceeds n = " + std::to_string(n));
    validate_partition(c.regions, n);
    if (c.target_region < 0 ||
        c.target_region >= static_cast<int>(c.regions.size()))
      throw IndexError("pointing_accuracy: target region out of range");
    std::vector<int> region_of(n, -1);
    for (size_t r = 0; r < c.regions.size(); ++r)
      for (int idx : c.regions[r]) region_of[idx] = static_cast<int>(r);
    const std::vector<int> ranking =
        ranked_order(c.result.scores, RankingMode::kAbsolute);
    int in_target = 0;
    for (int i = 0; i < top_k; ++i)
      if (region_of[ranking[i]] == c.target_region) ++in_target;
    if (2 * in_target > top_k) ++positives;
  }
  return static_cast<double>(positives) / cases.size();
}

}  // namespace gpig
