#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gpig/core.hpp"
#include "gpig/graph.hpp"
#include "gpig/models.hpp"
#include "gpig/rng.hpp"

namespace gpig {

// ---------------------------------------------------------------------------
// Feature replication
// ---------------------------------------------------------------------------

enum class ReplicationMode { kSmoothMax, kMean };

// Expands each base feature i into counts[i] identical copies. The hard max
// of the redundancy construction is not differentiable on the diagonal path,
// so the oracle aggregates each block with a smooth surrogate; the exact
// variant below keeps the hard max for set evaluation.
struct ReplicationSpec {
  DifferentiableObjective base;
  std::vector<int> counts;
  ReplicationMode mode = ReplicationMode::kSmoothMax;
  double beta = 32.0;
};

inline std::vector<std::pair<int, int>> replication_blocks(
    const std::vector<int>& counts) {
  std::vector<std::pair<int, int>> blocks;
  int offset = 0;
  for (int c : counts) {
    if (c < 1) throw RangeError("replication count must be >= 1");
    blocks.push_back({offset, offset + c});
    offset += c;
  }
  return blocks;
}

namespace detail {

inline void check_replication_spec(const ReplicationSpec& spec) {
  if (static_cast<int>(spec.counts.size()) != spec.base.dimension())
    throw DimensionError("replication counts (" +
                         std::to_string(spec.counts.size()) +
                         ") vs base dimension (" +
                         std::to_string(spec.base.dimension()) + ")");
  if (spec.mode == ReplicationMode::kSmoothMax && !(spec.beta > 0.0))
    throw RangeError("smooth-max temperature beta must be positive");
}

}  // namespace detail

// Smooth surrogate: each block is aggregated by (1/beta) log sum exp(beta w),
// shifted so a block of zeros maps to 0 and a block of ones maps to 1, or by
// the block mean. Gradients flow by the chain rule.
inline DifferentiableObjective replicate_features(const ReplicationSpec& spec) {
  detail::check_replication_spec(spec);
  const auto blocks = replication_blocks(spec.counts);
  const int n = blocks.back().second;
  const DifferentiableObjective base = spec.base;
  const ReplicationMode mode = spec.mode;
  const double beta = spec.beta;

  auto eval = [base, blocks, mode, beta](const FeatureMask& mask) {
    const int n0 = static_cast<int>(blocks.size());
    Vec agg(n0);
    Matrix jac_rows(0, 0);
    std::vector<Vec> block_grads(n0);
    for (int i = 0; i < n0; ++i) {
      const auto [lo, hi] = blocks[i];
      const int k = hi - lo;
      Vec u(k);
      for (int j = 0; j < k; ++j) u[j] = mask[lo + j];
      if (mode == ReplicationMode::kMean) {
        double s = 0.0;
        for (double v : u) s += v;
        agg[i] = s / k;
        block_grads[i].assign(k, 1.0 / k);
      } else {
        Vec scaled(k);
        for (int j = 0; j < k; ++j) scaled[j] = beta * u[j];
        const double lse = logsumexp(scaled);
        agg[i] = std::min(1.0, std::max(0.0, lse / beta -
                                                 std::log(static_cast<double>(k)) / beta));
        block_grads[i].resize(k);
        for (int j = 0; j < k; ++j)
          block_grads[i][j] = std::exp(scaled[j] - lse);
      }
    }
    const EvalResult inner = base.value_and_gradient(FeatureMask(agg));
    EvalResult out;
    out.value = inner.value;
    out.gradient.assign(blocks.back().second, 0.0);
    for (int i = 0; i < n0; ++i) {
      const auto [lo, hi] = blocks[i];
      for (int j = lo; j < hi; ++j)
        out.gradient[j] = inner.gradient[i] * block_grads[i][j - lo];
    }
    return out;
  };
  return DifferentiableObjective(
      n, "replicated(" + base.description() + "," +
             (mode == ReplicationMode::kMean
                  ? std::string("mean")
                  : "smooth_max beta=" + std::to_string(beta)) +
             ")",
      eval);
}

// Hard-max aggregation; exact on 0/1 masks, used for set-function evaluation.
// The subgradient routes through the lowest-index maximizer.
inline DifferentiableObjective replicate_features_exact(
    const ReplicationSpec& spec) {
  detail::check_replication_spec(spec);
  const auto blocks = replication_blocks(spec.counts);
  const int n = blocks.back().second;
  const DifferentiableObjective base = spec.base;

  auto eval = [base, blocks](const FeatureMask& mask) {
    const int n0 = static_cast<int>(blocks.size());
    Vec agg(n0);
    std::vector<int> arg(n0);
    for (int i = 0; i < n0; ++i) {
      const auto [lo, hi] = blocks[i];
      int best = lo;
      for (int j = lo + 1; j < hi; ++j)
        if (mask[j] > mask[best]) best = j;
      agg[i] = mask[best];
      arg[i] = best;
    }
    const EvalResult inner = base.value_and_gradient(FeatureMask(agg));
    EvalResult out;
    out.value = inner.value;
    out.gradient.assign(blocks.back().second, 0.0);
    for (int i = 0; i < n0; ++i) out.gradient[arg[i]] = inner.gradient[i];
    return out;
  };
  return DifferentiableObjective(
      n, "replicated(" + base.description() + ",hard_max)", eval);
}

// Modular base objective g(s) = <weights, s>; handy for planted instances.
inline DifferentiableObjective modular_objective(Vec weights) {
  const int n = static_cast<int>(weights.size());
  return DifferentiableObjective(
      n, "modular(n=" + std::to_string(n) + ")",
      [weights](const FeatureMask& mask) {
        EvalResult out;
        out.gradient = weights;
        for (int i = 0; i < static_cast<int>(weights.size()); ++i)
          out.value += weights[i] * mask[i];
        return out;
      });
}

// ---------------------------------------------------------------------------
// Correlated linear regression
// ---------------------------------------------------------------------------

// Gaussian design with the listed pairs at correlation rho, columns scaled to
// unit Euclidean norm, and a planted response of +1/-1 on each pair (0.3 on
// unpaired features) plus noise.
inline LinRegProblem make_correlated_linreg(
    int n, const std::vector<std::pair<int, int>>& pairs, double rho,
    uint64_t seed, int rows = 200, double noise_std = 0.05) {
  if (n < 1) throw DimensionError("need at least one feature");
  if (!(std::abs(rho) < 1.0))
    throw RangeError("pair correlation rho = " + std::to_string(rho) +
                     " must satisfy |rho| < 1");
  std::vector<uint8_t> used(n, 0);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j)
      throw IndexError("bad correlated pair (" + std::to_string(i) + "," +
                       std::to_string(j) + ")");
    if (used[i] || used[j])
      throw IndexError("feature reused across correlated pairs");
    used[i] = used[j] = 1;
  }
  Rng rng = Rng(seed).substream("correlated-linreg");
  Matrix a(rows, n);
  for (double& v : a.data()) v = rng.normal();
  for (const auto& [i, j] : pairs) {
    const double mix = std::sqrt(1.0 - rho * rho);
    for (int r = 0; r < rows; ++r)
      a(r, j) = rho * a(r, i) + mix * a(r, j);
  }
  for (int c = 0; c < n; ++c) {
    double norm = 0.0;
    for (int r = 0; r < rows; ++r) norm += a(r, c) * a(r, c);
    norm = std::sqrt(norm);
    for (int r = 0; r < rows; ++r) a(r, c) /= norm;
  }
  Vec w(n, 0.3);
  for (const auto& [i, j] : pairs) {
    w[i] = 1.0;
    w[j] = -1.0;
  }
  Vec b = matvec(a, w);
  for (double& v : b) v += noise_std * rng.normal();
  return linreg_solve(a, b);
}

// Closed-form one-shot scores for the regression oracle: x* .* (A^T b),
// which equals (1/2) grad g(0) and telescopes to g(1) - g(0).
inline Vec closed_form_pig_linreg(const LinRegProblem& problem) {
  const Vec atb = matvec_transposed(problem.design, problem.targets);
  return hadamard(problem.solution, atb);
}

// ---------------------------------------------------------------------------
// Planted tabular data
// ---------------------------------------------------------------------------

struct PlantedTabularSpec {
  int n_features = 30;
  int k_informative = 5;
  int n_rows = 4096;
  int n_val_rows = 1024;
  double noise_std = 0.5;
  uint64_t seed = 1;
  int batch_size = 64;
};

struct PlantedTabular {
  TabularDataset train;
  TabularDataset validation;
  std::vector<int> informative;
  Vec logit_weights;  // nonzero only on the informative features
};

// Binary labels from a random linear logit on the planted features plus
// Gaussian noise; all other features are independent noise.
inline PlantedTabular make_planted_tabular(const PlantedTabularSpec& spec) {
  if (spec.k_informative < 0 || spec.k_informative > spec.n_features)
    throw RangeError("k_informative outside [0, n_features]");
  if (spec.n_rows < 1 || spec.n_val_rows < 1)
    throw RangeError("row counts must be >= 1");
  if (spec.batch_size < 1) throw RangeError("batch_size must be >= 1");
  Rng rng = Rng(spec.seed).substream("planted-tabular");
  std::vector<int> order(spec.n_features);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> informative(order.begin(), order.begin() + spec.k_informative);
  std::sort(informative.begin(), informative.end());
  Vec weights(spec.n_features, 0.0);
  for (int idx : informative) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    weights[idx] = sign * rng.uniform(0.75, 1.5);
  }
  auto draw = [&](int rows) {
    TabularDataset data;
    data.batch_size = spec.batch_size;
    data.rows = Matrix(rows, spec.n_features);
    data.labels.resize(rows);
    for (int r = 0; r < rows; ++r) {
      double logit = 0.0;
      for (int c = 0; c < spec.n_features; ++c) {
        const double x = rng.normal();
        data.rows(r, c) = x;
        logit += weights[c] * x;
      }
      logit += spec.noise_std * rng.normal();
      data.labels[r] = logit > 0.0 ? 1 : 0;
    }
    return data;
  };
  PlantedTabular out;
  out.train = draw(spec.n_rows);
  out.validation = draw(spec.n_val_rows);
  out.informative = std::move(informative);
  out.logit_weights = std::move(weights);
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic block model graphs
// ---------------------------------------------------------------------------

// Undirected SBM with block-correlated node features, labels equal to block
// ids, and a seeded train/test node split.
inline SparseGraph make_sbm_graph(const std::vector<int>& block_sizes,
                                  double p_in, double p_out, int feature_dim,
                                  uint64_t seed, double train_fraction = 0.5) {
  if (block_sizes.empty()) throw DimensionError("need at least one block");
  for (int s : block_sizes)
    if (s < 1) throw DimensionError("empty block in SBM spec");
  if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0))
    throw RangeError("SBM probabilities must lie in [0,1]");
  if (feature_dim < 1) throw DimensionError("feature_dim must be >= 1");
  Rng rng = Rng(seed).substream("sbm");

  SparseGraph g;
  for (int s : block_sizes) g.num_nodes += s;
  std::vector<int> block_of;
  for (size_t b = 0; b < block_sizes.size(); ++b)
    block_of.insert(block_of.end(), block_sizes[b], static_cast<int>(b));
  g.labels = block_of;

  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < g.num_nodes; ++u)
    for (int v = u + 1; v < g.num_nodes; ++v) {
      const double p = block_of[u] == block_of[v] ? p_in : p_out;
      if (rng.uniform() < p) edges.push_back({u, v});
    }
  g.edges = canonical_edges(std::move(edges), g.num_nodes);

  Matrix means(static_cast<int>(block_sizes.size()), feature_dim);
  for (double& v : means.data()) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  g.node_features = Matrix(g.num_nodes, feature_dim);
  for (int u = 0; u < g.num_nodes; ++u)
    for (int c = 0; c < feature_dim; ++c)
      g.node_features(u, c) = means(block_of[u], c) + 0.5 * rng.normal();

  g.train_mask.assign(g.num_nodes, 0);
  g.test_mask.assign(g.num_nodes, 0);
  for (int u = 0; u < g.num_nodes; ++u) {
    if (rng.uniform() < train_fraction)
      g.train_mask[u] = 1;
    else
      g.test_mask[u] = 1;
  }
  // Keep both sides nonempty so accuracies are defined.
  if (std::count(g.train_mask.begin(), g.train_mask.end(), 1) == 0) {
    g.train_mask[0] = 1;
    g.test_mask[0] = 0;
  }
  if (std::count(g.test_mask.begin(), g.test_mask.end(), 1) == 0) {
    g.test_mask[g.num_nodes - 1] = 1;
    g.train_mask[g.num_nodes - 1] = 0;
  }
  validate_graph(g);
  return g;
}

}  // namespace gpig
