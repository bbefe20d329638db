#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "gpig/core.hpp"
#include "gpig/models.hpp"
#include "gpig/rng.hpp"

namespace gpig {

// ---------------------------------------------------------------------------
// Sparse graph
// ---------------------------------------------------------------------------

// Undirected graph with node features and labels. Edges are stored once with
// u < v; self-connections are added by normalization, never by the edge list.
struct SparseGraph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  Matrix node_features;           // num_nodes x feature_dim
  std::vector<int> labels;        // length num_nodes
  std::vector<uint8_t> train_mask;
  std::vector<uint8_t> test_mask;

  int num_edges() const { return static_cast<int>(edges.size()); }
  int feature_dim() const { return node_features.cols(); }
  int num_classes() const {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return std::max(c, 2);
  }
};

// Orients each pair as u < v, sorts, removes duplicates, rejects self-loops.
inline std::vector<std::pair<int, int>> canonical_edges(
    std::vector<std::pair<int, int>> edges, int num_nodes) {
  for (auto& [u, v] : edges) {
    if (u == v)
      throw IndexError("self-loop at node " + std::to_string(u));
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw IndexError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                       ") out of range for " + std::to_string(num_nodes) +
                       " nodes");
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

inline void validate_graph(const SparseGraph& g) {
  auto canon = canonical_edges(g.edges, g.num_nodes);
  if (canon != g.edges)
    throw IndexError("edge list is not sorted/unique/oriented u < v");
  if (g.node_features.rows() != g.num_nodes)
    throw DimensionError("feature rows " +
                         std::to_string(g.node_features.rows()) + " vs nodes " +
                         std::to_string(g.num_nodes));
  if (static_cast<int>(g.labels.size()) != g.num_nodes)
    throw DimensionError("label count vs nodes");
  if (static_cast<int>(g.train_mask.size()) != g.num_nodes ||
      static_cast<int>(g.test_mask.size()) != g.num_nodes)
    throw DimensionError("split masks vs nodes");
}

// One shared mask value per undirected edge.
using EdgeMask = FeatureMask;

using EdgeAttributionResult = AttributionResult;

// incidence[u] = list of (neighbor, edge index)
inline std::vector<std::vector<std::pair<int, int>>> build_incidence(
    const SparseGraph& g) {
  std::vector<std::vector<std::pair<int, int>>> inc(g.num_nodes);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    inc[u].push_back({v, e});
    inc[v].push_back({u, e});
  }
  return inc;
}

// ---------------------------------------------------------------------------
// Symmetric normalization
// ---------------------------------------------------------------------------

// Dense reference: (D+I)^{-1/2} (W+I) (D+I)^{-1/2} with D = diag(row sums).
inline Matrix normalize_adjacency(const Matrix& weighted) {
  const int m = weighted.rows();
  if (weighted.cols() != m)
    throw DimensionError("normalize_adjacency: matrix is " +
                         std::to_string(weighted.rows()) + "x" +
                         std::to_string(weighted.cols()));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (weighted(i, j) < 0.0)
        throw RangeError("negative adjacency weight at (" + std::to_string(i) +
                         "," + std::to_string(j) + ")");
      if (std::abs(weighted(i, j) - weighted(j, i)) > 1e-12)
        throw Error("normalize_adjacency: input is not symmetric");
    }
  Vec inv_sqrt(m);
  for (int i = 0; i < m; ++i) {
    double deg = 0.0;
    for (int j = 0; j < m; ++j) deg += weighted(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg + 1.0);
  }
  Matrix out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double w = weighted(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = w * inv_sqrt[i] * inv_sqrt[j];
    }
  return out;
}

// Projection of a directed gradient matrix onto symmetric matrices.
inline Matrix symmetrize_gradient(const Matrix& directed) {
  if (directed.rows() != directed.cols())
    throw DimensionError("symmetrize_gradient: matrix is " +
                         std::to_string(directed.rows()) + "x" +
                         std::to_string(directed.cols()));
  Matrix out(directed.rows(), directed.cols());
  for (int i = 0; i < directed.rows(); ++i)
    for (int j = 0; j < directed.cols(); ++j)
      out(i, j) = 0.5 * (directed(i, j) + directed(j, i));
  return out;
}

// ---------------------------------------------------------------------------
// GCN forward/backward on masked edges
// ---------------------------------------------------------------------------

namespace detail {

struct GcnGeometry {
  Vec dt;        // masked degree + 1
  Vec inv_sqrt;  // 1/sqrt(dt)
};

inline GcnGeometry gcn_geometry(const SparseGraph& g,
                                const std::vector<std::vector<std::pair<int, int>>>& inc,
                                const Vec& mask) {
  GcnGeometry geo;
  geo.dt.assign(g.num_nodes, 1.0);
  for (int u = 0; u < g.num_nodes; ++u)
    for (const auto& [v, e] : inc[u]) {
      (void)v;
      geo.dt[u] += mask[e];
    }
  geo.inv_sqrt.resize(g.num_nodes);
  for (int u = 0; u < g.num_nodes; ++u)
    geo.inv_sqrt[u] = 1.0 / std::sqrt(geo.dt[u]);
  return geo;
}

// Y = A-hat H with A-hat defined by the masked weights and recomputed degrees.
inline Matrix gcn_propagate(const SparseGraph& g,
                            const std::vector<std::vector<std::pair<int, int>>>& inc,
                            const GcnGeometry& geo, const Vec& mask,
                            const Matrix& h) {
  Matrix out(g.num_nodes, h.cols());
  for (int u = 0; u < g.num_nodes; ++u) {
    double* orow = out.row_ptr(u);
    const double self = geo.inv_sqrt[u] * geo.inv_sqrt[u];
    const double* hrow = h.row_ptr(u);
    for (int c = 0; c < h.cols(); ++c) orow[c] = self * hrow[c];
    for (const auto& [v, e] : inc[u]) {
      const double w = mask[e] * geo.inv_sqrt[u] * geo.inv_sqrt[v];
      if (w == 0.0) continue;
      const double* nrow = h.row_ptr(v);
      for (int c = 0; c < h.cols(); ++c) orow[c] += w * nrow[c];
    }
  }
  return out;
}

struct GcnTrace {
  GcnGeometry geo;
  Matrix u1, z1, h1;  // u = propagated input, z = u theta, h = relu(z)
  Matrix u2, z2, h2;
  Matrix u3, z3;      // logits
};

inline Matrix relu(const Matrix& z) {
  Matrix h = z;
  for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
  return h;
}

inline GcnTrace gcn_trace(const TinyGCN& gcn, const SparseGraph& g,
                          const std::vector<std::vector<std::pair<int, int>>>& inc,
                          const Vec& mask) {
  GcnTrace t;
  t.geo = gcn_geometry(g, inc, mask);
  t.u1 = gcn_propagate(g, inc, t.geo, mask, g.node_features);
  t.z1 = matmul(t.u1, gcn.theta1);
  t.h1 = relu(t.z1);
  t.u2 = gcn_propagate(g, inc, t.geo, mask, t.h1);
  t.z2 = matmul(t.u2, gcn.theta2);
  t.h2 = relu(t.z2);
  t.u3 = gcn_propagate(g, inc, t.geo, mask, t.h2);
  t.z3 = matmul(t.u3, gcn.theta3);
  return t;
}

}  // namespace detail

inline Matrix gcn_logits(const TinyGCN& gcn, const SparseGraph& g,
                         const EdgeMask& mask) {
  if (mask.size() != g.num_edges())
    throw DimensionError("edge mask length " + std::to_string(mask.size()) +
                         " vs edges " + std::to_string(g.num_edges()));
  if (g.feature_dim() != gcn.feature_dim())
    throw DimensionError("graph feature dim " + std::to_string(g.feature_dim()) +
                         " vs GCN input dim " +
                         std::to_string(gcn.feature_dim()));
  const auto inc = build_incidence(g);
  return detail::gcn_trace(gcn, g, inc, mask.values()).z3;
}

inline Matrix gcn_probabilities(const TinyGCN& gcn, const SparseGraph& g,
                                const EdgeMask& mask) {
  Matrix logits = gcn_logits(gcn, g, mask);
  for (int i = 0; i < logits.rows(); ++i) {
    Vec row = logits.row(i);
    const Vec p = softmax(row);
    for (int j = 0; j < logits.cols(); ++j) logits(i, j) = p[j];
  }
  return logits;
}

inline int gcn_predict_row(const Matrix& logits, int node) {
  int best = 0;
  for (int c = 1; c < logits.cols(); ++c)
    if (logits(node, c) > logits(node, best)) best = c;
  return best;
}

// Accuracy over test nodes (or train nodes) with a hard edge subset.
inline double gcn_accuracy(const TinyGCN& gcn, const SparseGraph& g,
                           const EdgeMask& mask, bool on_test = true) {
  const Matrix logits = gcn_logits(gcn, g, mask);
  int total = 0, hits = 0;
  for (int u = 0; u < g.num_nodes; ++u) {
    const bool in = on_test ? g.test_mask[u] : g.train_mask[u];
    if (!in) continue;
    ++total;
    if (gcn_predict_row(logits, u) == g.labels[u]) ++hits;
  }
  if (total == 0) throw Error("gcn_accuracy: empty node split");
  return static_cast<double>(hits) / total;
}

// Full-batch gradient descent on mean train-node cross-entropy, all edges on.
inline TrainReport train_gcn(TinyGCN& gcn, const SparseGraph& g, int epochs,
                             double learning_rate) {
  validate_graph(g);
  if (g.feature_dim() != gcn.feature_dim())
    throw DimensionError("graph feature dim vs GCN input dim");
  const auto inc = build_incidence(g);
  const Vec ones(g.num_edges(), 1.0);
  int n_train = 0;
  for (uint8_t m : g.train_mask) n_train += m;
  if (n_train == 0) throw Error("train_gcn: no train nodes");

  double loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    detail::GcnTrace t = detail::gcn_trace(gcn, g, inc, ones);
    Matrix dz3(g.num_nodes, gcn.num_classes());
    loss = 0.0;
    for (int u = 0; u < g.num_nodes; ++u) {
      if (!g.train_mask[u]) continue;
      Vec row = t.z3.row(u);
      const double lse = logsumexp(row);
      loss += lse - row[g.labels[u]];
      for (int c = 0; c < gcn.num_classes(); ++c)
        dz3(u, c) = (std::exp(row[c] - lse) -
                     (c == g.labels[u] ? 1.0 : 0.0)) /
                    n_train;
    }
    loss /= n_train;
    if (!std::isfinite(loss))
      throw DivergenceError(
          "GCN training loss is not finite; try a smaller learning rate");
    const Matrix dtheta3 = matmul(transpose(t.u3), dz3);
    Matrix du3 = matmul(dz3, transpose(gcn.theta3));
    Matrix dh2 = detail::gcn_propagate(g, inc, t.geo, ones, du3);
    for (size_t i = 0; i < dh2.data().size(); ++i)
      if (t.z2.data()[i] <= 0.0) dh2.data()[i] = 0.0;
    const Matrix dtheta2 = matmul(transpose(t.u2), dh2);
    Matrix du2 = matmul(dh2, transpose(gcn.theta2));
    Matrix dh1 = detail::gcn_propagate(g, inc, t.geo, ones, du2);
    for (size_t i = 0; i < dh1.data().size(); ++i)
      if (t.z1.data()[i] <= 0.0) dh1.data()[i] = 0.0;
    const Matrix dtheta1 = matmul(transpose(t.u1), dh1);

    for (size_t i = 0; i < gcn.theta1.data().size(); ++i)
      gcn.theta1.data()[i] -= learning_rate * dtheta1.data()[i];
    for (size_t i = 0; i < gcn.theta2.data().size(); ++i)
      gcn.theta2.data()[i] -= learning_rate * dtheta2.data()[i];
    for (size_t i = 0; i < gcn.theta3.data().size(); ++i)
      gcn.theta3.data()[i] -= learning_rate * dtheta3.data()[i];
  }
  gcn.trained = true;
  TrainReport report;
  report.epochs = epochs;
  detail::GcnTrace t = detail::gcn_trace(gcn, g, inc, ones);
  double final_loss = 0.0;
  for (int u = 0; u < g.num_nodes; ++u) {
    if (!g.train_mask[u]) continue;
    Vec row = t.z3.row(u);
    final_loss += logsumexp(row) - row[g.labels[u]];
  }
  report.final_loss = final_loss / n_train;
  if (!std::isfinite(report.final_loss))
    throw DivergenceError(
        "GCN training loss is not finite; try a smaller learning rate");
  return report;
}

inline TinyGCN train_new_gcn(const std::vector<int>& dims, const SparseGraph& g,
                             int epochs, double learning_rate, uint64_t seed,
                             TrainReport* report = nullptr) {
  TinyGCN gcn = init_tiny_gcn(dims, seed);
  TrainReport r = train_gcn(gcn, g, epochs, learning_rate);
  if (report) *report = r;
  return gcn;
}

// ---------------------------------------------------------------------------
// Differentiable edge oracle
// ---------------------------------------------------------------------------

inline std::vector<int> hop_distances(const SparseGraph& g, int source) {
  std::vector<int> dist(g.num_nodes, -1);
  const auto inc = build_incidence(g);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const auto& [v, e] : inc[u]) {
      (void)e;
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

namespace detail {

struct EdgeObjectiveTargets {
  std::vector<int> nodes;               // nodes whose log-likelihood is averaged
  std::vector<uint8_t> allowed_edges;   // empty = all edges allowed
};

inline DifferentiableObjective make_edge_objective(
    const TinyGCN& gcn, const SparseGraph& g, EdgeObjectiveTargets targets,
    std::string description) {
  if (!gcn.trained)
    throw Error("gnn_edge_objective: GCN is untrained; train it first");
  validate_graph(g);
  if (targets.nodes.empty()) throw Error("edge objective: no target nodes");
  const auto inc = build_incidence(g);
  const int n_edges = g.num_edges();

  auto eval = [gcn, g, inc, targets, n_edges](const FeatureMask& mask) {
    const Vec& s = mask.values();
    GcnTrace t = gcn_trace(gcn, g, inc, s);
    const double inv_t = 1.0 / targets.nodes.size();

    EvalResult out;
    Matrix dz3(g.num_nodes, gcn.num_classes());
    for (int u : targets.nodes) {
      Vec row = t.z3.row(u);
      const double lse = logsumexp(row);
      out.value += (row[g.labels[u]] - lse) * inv_t;
      for (int c = 0; c < gcn.num_classes(); ++c)
        dz3(u, c) = ((c == g.labels[u] ? 1.0 : 0.0) -
                     std::exp(row[c] - lse)) *
                    inv_t;
    }

    // Directed gradient wrt A-hat entries on the support, accumulated over
    // the three propagations.
    Vec m_fwd(n_edges, 0.0);   // entry (u,v) for edge (u,v), u < v
    Vec m_bwd(n_edges, 0.0);   // entry (v,u)
    Vec m_diag(g.num_nodes, 0.0);
    auto accumulate = [&](const Matrix& du, const Matrix& h) {
      for (int e = 0; e < n_edges; ++e) {
        const auto [a, b] = g.edges[e];
        m_fwd[e] += dot(du.row(a), h.row(b));
        m_bwd[e] += dot(du.row(b), h.row(a));
      }
      for (int u = 0; u < g.num_nodes; ++u)
        m_diag[u] += dot(du.row(u), h.row(u));
    };

    Matrix du3 = matmul(dz3, transpose(gcn.theta3));
    accumulate(du3, t.h2);
    Matrix dh2 = gcn_propagate(g, inc, t.geo, s, du3);
    for (size_t i = 0; i < dh2.data().size(); ++i)
      if (t.z2.data()[i] <= 0.0) dh2.data()[i] = 0.0;
    Matrix du2 = matmul(dh2, transpose(gcn.theta2));
    accumulate(du2, t.h1);
    Matrix dh1 = gcn_propagate(g, inc, t.geo, s, du2);
    for (size_t i = 0; i < dh1.data().size(); ++i)
      if (t.z1.data()[i] <= 0.0) dh1.data()[i] = 0.0;
    Matrix du1 = matmul(dh1, transpose(gcn.theta1));
    accumulate(du1, g.node_features);

    // Degree sensitivities: every incident edge moves dt[u] by one.
    Vec d_dt(g.num_nodes, 0.0);
    for (int e = 0; e < n_edges; ++e) {
      const auto [a, b] = g.edges[e];
      const double a_uv = s[e] * t.geo.inv_sqrt[a] * t.geo.inv_sqrt[b];
      const double pair_grad = m_fwd[e] + m_bwd[e];
      d_dt[a] += pair_grad * (-0.5 * a_uv / t.geo.dt[a]);
      d_dt[b] += pair_grad * (-0.5 * a_uv / t.geo.dt[b]);
    }
    for (int u = 0; u < g.num_nodes; ++u)
      d_dt[u] += m_diag[u] * (-1.0 / (t.geo.dt[u] * t.geo.dt[u]));

    out.gradient.assign(n_edges, 0.0);
    for (int e = 0; e < n_edges; ++e) {
      const auto [a, b] = g.edges[e];
      out.gradient[e] = (m_fwd[e] + m_bwd[e]) * t.geo.inv_sqrt[a] *
                            t.geo.inv_sqrt[b] +
                        d_dt[a] + d_dt[b];
    }
    if (!targets.allowed_edges.empty())
      for (int e = 0; e < n_edges; ++e)
        if (!targets.allowed_edges[e]) out.gradient[e] = 0.0;
    return out;
  };
  return DifferentiableObjective(n_edges, std::move(description), eval);
}

}  // namespace detail

// Mean log-likelihood of the true labels over all train nodes, as a
// differentiable function of the per-edge masks (degrees recomputed from the
// masked adjacency and differentiated through).
inline DifferentiableObjective gnn_edge_objective(const TinyGCN& gcn,
                                                  const SparseGraph& g) {
  detail::EdgeObjectiveTargets targets;
  for (int u = 0; u < g.num_nodes; ++u)
    if (g.train_mask[u]) targets.nodes.push_back(u);
  return detail::make_edge_objective(gcn, g, std::move(targets),
                                     "gnn-edges(all-train-nodes)");
}

// Single-node explanation: gradient support restricted to the edge set induced
// by nodes within 3 hops of the target.
inline DifferentiableObjective gnn_edge_objective(const TinyGCN& gcn,
                                                  const SparseGraph& g,
                                                  int target_node) {
  if (target_node < 0 || target_node >= g.num_nodes)
    throw IndexError("target node " + std::to_string(target_node) +
                     " out of range");
  detail::EdgeObjectiveTargets targets;
  targets.nodes.push_back(target_node);
  const std::vector<int> dist = hop_distances(g, target_node);
  targets.allowed_edges.assign(g.num_edges(), 0);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [a, b] = g.edges[e];
    const bool in_a = dist[a] >= 0 && dist[a] <= 3;
    const bool in_b = dist[b] >= 0 && dist[b] <= 3;
    targets.allowed_edges[e] = (in_a && in_b) ? 1 : 0;
  }
  return detail::make_edge_objective(
      gcn, g, std::move(targets),
      "gnn-edges(node=" + std::to_string(target_node) + ")");
}

// ---------------------------------------------------------------------------
// Baseline edge selectors and compression curves
// ---------------------------------------------------------------------------

enum class EdgeSelectorKind { kUniform, kDegreeWeighted };

inline std::string to_string(EdgeSelectorKind k) {
  return k == EdgeSelectorKind::kUniform ? "uniform" : "degree_weighted";
}

// Full random edge order; prefixes realize sampling without replacement.
// Degree weighting draws edge (u,v) proportionally to (deg_u deg_v)^{-1/2}
// via exponential-race keys.
inline std::vector<int> baseline_edge_order(const SparseGraph& g,
                                            EdgeSelectorKind kind,
                                            uint64_t seed) {
  std::vector<int> order(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) order[e] = e;
  Rng rng = Rng(seed).substream("edge-selector");
  if (kind == EdgeSelectorKind::kUniform) {
    rng.shuffle(order);
    return order;
  }
  Vec degree(g.num_nodes, 0.0);
  for (const auto& [u, v] : g.edges) {
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  Vec key(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    const double w = 1.0 / std::sqrt(degree[u] * degree[v]);
    double unif = rng.uniform();
    while (unif <= 0.0) unif = rng.uniform();
    key[e] = -std::log(unif) / w;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[a] < key[b]; });
  return order;
}

inline std::vector<int> baseline_edge_selector(const SparseGraph& g,
                                               EdgeSelectorKind kind,
                                               double ratio, uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw RangeError("edge selection ratio " + std::to_string(ratio) +
                     " outside [0,1]");
  std::vector<int> order = baseline_edge_order(g, kind, seed);
  const int keep = static_cast<int>(std::ceil(ratio * g.num_edges()));
  order.resize(std::min<int>(keep, g.num_edges()));
  return order;
}

struct CompressionPoint {
  double ratio = 0.0;
  double accuracy = 0.0;
};

struct CompressionCurve {
  std::vector<CompressionPoint> points;
  double full_reference = 0.0;  // accuracy with every edge selected
};

// Test accuracy of hard-selected edge prefixes of the given order.
inline CompressionCurve compression_curve(const TinyGCN& gcn,
                                          const SparseGraph& g,
                                          const std::vector<int>& edge_order,
                                          const std::vector<double>& ratios) {
  for (size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0))
      throw RangeError("ratio " + std::to_string(ratios[i]) + " outside [0,1]");
    if (i > 0 && ratios[i] < ratios[i - 1])
      throw RangeError("ratios must be sorted ascending");
  }
  CompressionCurve curve;
  curve.full_reference =
      gcn_accuracy(gcn, g, EdgeMask::ones(g.num_edges()));
  for (double ratio : ratios) {
    const int keep = static_cast<int>(std::ceil(ratio * g.num_edges()));
    Vec mask(g.num_edges(), 0.0);
    for (int i = 0; i < keep && i < static_cast<int>(edge_order.size()); ++i)
      mask[edge_order[i]] = 1.0;
    curve.points.push_back(
        {ratio, gcn_accuracy(gcn, g, EdgeMask(std::move(mask)))});
  }
  return curve;
}

}  // namespace gpig
