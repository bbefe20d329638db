#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpig/error.hpp"
#include "gpig/linalg.hpp"

namespace gpig {

// Point s in the unit hypercube mixing baseline and input per coordinate.
class FeatureMask {
 public:
  explicit FeatureMask(Vec values) : values_(std::move(values)) {
    for (size_t i = 0; i < values_.size(); ++i) {
      const double v = values_[i];
      if (!(v >= 0.0 && v <= 1.0))
        throw RangeError("mask entry " + std::to_string(i) + " = " +
                         std::to_string(v) + " outside [0,1]");
    }
  }

  static FeatureMask zeros(int n) { return FeatureMask(Vec(n, 0.0)); }
  static FeatureMask ones(int n) { return FeatureMask(Vec(n, 1.0)); }
  static FeatureMask constant(int n, double t) { return FeatureMask(Vec(n, t)); }

  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  const Vec& values() const { return values_; }

 private:
  Vec values_;
};

// Straight line from baseline x0 to input x.
struct PathSpec {
  Vec baseline;
  Vec input;

  PathSpec(Vec baseline_in, Vec input_in)
      : baseline(std::move(baseline_in)), input(std::move(input_in)) {
    if (baseline.size() != input.size())
      throw DimensionError("path baseline length " +
                           std::to_string(baseline.size()) +
                           " vs input length " + std::to_string(input.size()));
  }

  int dimension() const { return static_cast<int>(input.size()); }
};

// x0*(1-s) + x*s. This form hits the endpoints exactly in floating point.
inline Vec interpolate(const PathSpec& path, const FeatureMask& mask) {
  if (mask.size() != path.dimension())
    throw DimensionError("interpolate: path dimension " +
                         std::to_string(path.dimension()) + " vs mask length " +
                         std::to_string(mask.size()));
  Vec out(path.dimension());
  for (int i = 0; i < path.dimension(); ++i)
    out[i] = path.baseline[i] * (1.0 - mask[i]) + path.input[i] * mask[i];
  return out;
}

inline Vec line_point(const PathSpec& path, double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw RangeError("line parameter t = " + std::to_string(t) +
                     " outside [0,1]");
  return interpolate(path, FeatureMask::constant(path.dimension(), t));
}

// Ordered selected set S together with the mask that freezes it at 1.
class SelectionState {
 public:
  explicit SelectionState(int n)
      : n_(n), member_(n, 0), frozen_(n, 0.0) {
    if (n < 0) throw DimensionError("negative selection dimension");
  }

  void add(int index) {
    if (index < 0 || index >= n_)
      throw IndexError("selection index " + std::to_string(index) +
                       " out of range for n = " + std::to_string(n_));
    if (member_[index])
      throw IndexError("selection index " + std::to_string(index) +
                       " already selected");
    member_[index] = 1;
    frozen_[index] = 1.0;
    selected_.push_back(index);
  }

  bool contains(int index) const { return member_[index] != 0; }
  int dimension() const { return n_; }
  int count() const { return static_cast<int>(selected_.size()); }
  const std::vector<int>& selected() const { return selected_; }
  FeatureMask frozen_mask() const { return FeatureMask(frozen_); }

 private:
  int n_;
  std::vector<int> selected_;
  std::vector<uint8_t> member_;
  Vec frozen_;
};

inline FeatureMask mask_from_selection(const std::vector<int>& selected, int n) {
  Vec v(n, 0.0);
  std::vector<uint8_t> seen(n, 0);
  for (int idx : selected) {
    if (idx < 0 || idx >= n)
      throw IndexError("selection index " + std::to_string(idx) +
                       " out of range for n = " + std::to_string(n));
    if (seen[idx])
      throw IndexError("duplicate selection index " + std::to_string(idx));
    seen[idx] = 1;
    v[idx] = 1.0;
  }
  return FeatureMask(std::move(v));
}

inline FeatureMask mask_from_selection(const SelectionState& state, int n) {
  return mask_from_selection(state.selected(), n);
}

enum class RankingMode { kSigned, kAbsolute };

inline std::string to_string(RankingMode mode) {
  return mode == RankingMode::kSigned ? "signed" : "absolute";
}

inline RankingMode ranking_mode_from_string(const std::string& s) {
  if (s == "signed") return RankingMode::kSigned;
  if (s == "absolute") return RankingMode::kAbsolute;
  throw ParseError("unknown ranking mode '" + s + "'");
}

// Descending argsort under the ranking mode; equal keys keep ascending index.
inline std::vector<int> ranked_order(const Vec& scores, RankingMode mode) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](int i) {
    return mode == RankingMode::kAbsolute ? std::abs(scores[i]) : scores[i];
  };
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return key(a) > key(b); });
  return idx;
}

// Tuning knobs shared by the attribution algorithms.
struct AlgoConfig {
  int rounds = 1;
  int per_round = 1;
  int steps = 32;
  uint64_t rng_seed = 0;
  RankingMode ranking = RankingMode::kSigned;
  std::optional<std::vector<std::vector<int>>> groups;
  int threads = 1;

  void validate() const {
    if (rounds < 1)
      throw RangeError("rounds = " + std::to_string(rounds) + ", need >= 1");
    if (per_round < 1)
      throw RangeError("per_round = " + std::to_string(per_round) +
                       ", need >= 1");
    if (steps < 1)
      throw RangeError("steps = " + std::to_string(steps) + ", need >= 1");
    if (threads < 1)
      throw RangeError("threads = " + std::to_string(threads) + ", need >= 1");
  }
};

struct EvalResult {
  double value = 0.0;
  Vec gradient;
};

// Pure value-and-gradient oracle over the unit hypercube.
class DifferentiableObjective {
 public:
  using EvalFn = std::function<EvalResult(const FeatureMask&)>;
  using ValueFn = std::function<double(const FeatureMask&)>;

  DifferentiableObjective(int dimension, std::string description, EvalFn eval)
      : dimension_(dimension),
        description_(std::move(description)),
        eval_(std::move(eval)) {}

  DifferentiableObjective(int dimension, std::string description, EvalFn eval,
                          ValueFn value)
      : dimension_(dimension),
        description_(std::move(description)),
        eval_(std::move(eval)),
        value_(std::move(value)) {}

  int dimension() const { return dimension_; }
  const std::string& description() const { return description_; }

  EvalResult value_and_gradient(const FeatureMask& mask) const {
    check(mask);
    return eval_(mask);
  }

  double value(const FeatureMask& mask) const {
    check(mask);
    if (value_) return value_(mask);
    return eval_(mask).value;
  }

 private:
  void check(const FeatureMask& mask) const {
    if (mask.size() != dimension_)
      throw DimensionError("objective dimension " + std::to_string(dimension_) +
                           " vs mask length " + std::to_string(mask.size()));
  }

  int dimension_;
  std::string description_;
  EvalFn eval_;
  ValueFn value_;
};

// One adaptive round of a selection algorithm.
struct RoundRecord {
  int round = 0;
  Vec candidate_scores;  // zero at already-frozen indices
  std::vector<int> chosen;
  int selected_total = 0;
};

struct AttributionResult {
  Vec scores;
  std::vector<int> order;
  std::vector<RoundRecord> rounds;
  int gradient_evals = 0;
  int negative_selected = 0;
};

}  // namespace gpig
