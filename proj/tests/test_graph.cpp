#include "catch_amalgamated.hpp"

#include <cmath>

#include "gpig/graph.hpp"
#include "gpig/synthetic.hpp"
#include "test_oracles.hpp"

using namespace gpig;

namespace {

// Small connected test graph with seeded features and labels.
SparseGraph toy_graph(int nodes, double extra_edge_prob, int feature_dim,
                      uint64_t seed) {
  Rng rng(seed);
  SparseGraph g;
  g.num_nodes = nodes;
  std::vector<std::pair<int, int>> edges;
  for (int u = 1; u < nodes; ++u) edges.push_back({rng.uniform_int(u), u});
  for (int u = 0; u < nodes; ++u)
    for (int v = u + 1; v < nodes; ++v)
      if (rng.uniform() < extra_edge_prob) edges.push_back({u, v});
  g.edges = canonical_edges(std::move(edges), nodes);
  g.node_features = Matrix(nodes, feature_dim);
  for (double& v : g.node_features.data()) v = rng.normal();
  g.labels.resize(nodes);
  g.train_mask.assign(nodes, 0);
  g.test_mask.assign(nodes, 0);
  for (int u = 0; u < nodes; ++u) {
    g.labels[u] = rng.uniform() < 0.5 ? 0 : 1;
    if (rng.uniform() < 0.6)
      g.train_mask[u] = 1;
    else
      g.test_mask[u] = 1;
  }
  g.train_mask[0] = 1;
  g.test_mask[0] = 0;
  if (std::count(g.test_mask.begin(), g.test_mask.end(), 1) == 0)
    g.test_mask[nodes - 1] = 1;
  return g;
}

Matrix dense_masked_adjacency(const SparseGraph& g, const Vec& mask) {
  Matrix w(g.num_nodes, g.num_nodes);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    w(u, v) = mask[e];
    w(v, u) = mask[e];
  }
  return w;
}

// Dense reference GCN value over an arbitrary (possibly asymmetric) dense
// mask matrix; used for directed finite differences.
double dense_gcn_value(const TinyGCN& gcn, const SparseGraph& g,
                       const Matrix& s) {
  const int m = g.num_nodes;
  Matrix w(m, m);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    w(u, v) = s(u, v);
    w(v, u) = s(v, u);
  }
  Vec inv_sqrt(m);
  for (int i = 0; i < m; ++i) {
    double deg = 0.0;
    for (int j = 0; j < m; ++j) deg += w(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(deg + 1.0);
  }
  Matrix ahat(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      ahat(i, j) = (w(i, j) + (i == j ? 1.0 : 0.0)) * inv_sqrt[i] * inv_sqrt[j];
  auto relu_m = [](Matrix x) {
    for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
    return x;
  };
  Matrix h1 = relu_m(matmul(matmul(ahat, g.node_features), gcn.theta1));
  Matrix h2 = relu_m(matmul(matmul(ahat, h1), gcn.theta2));
  Matrix z3 = matmul(matmul(ahat, h2), gcn.theta3);
  double value = 0.0;
  int count = 0;
  for (int u = 0; u < m; ++u) {
    if (!g.train_mask[u]) continue;
    Vec row = z3.row(u);
    value += row[g.labels[u]] - logsumexp(row);
    ++count;
  }
  return value / count;
}

}  // namespace

TEST_CASE("canonical_edges orients, sorts, dedupes and rejects self-loops") {
  auto edges = canonical_edges({{3, 1}, {0, 2}, {1, 3}, {2, 0}}, 4);
  CHECK(edges == std::vector<std::pair<int, int>>{{0, 2}, {1, 3}});
  CHECK_THROWS_AS(canonical_edges({{1, 1}}, 3), IndexError);
  CHECK_THROWS_AS(canonical_edges({{0, 5}}, 3), IndexError);
}

TEST_CASE("normalize_adjacency on the documented small cases") {
  Matrix one_edge(2, 2);
  one_edge(0, 1) = one_edge(1, 0) = 1.0;
  Matrix norm = normalize_adjacency(one_edge);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(norm(i, j) == Catch::Approx(0.5));

  Matrix empty(3, 3, 0.0);
  Matrix ident = normalize_adjacency(empty);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(ident(i, j) == Catch::Approx(i == j ? 1.0 : 0.0));

  // 4-cycle is 2-regular: every row of the normalized matrix sums to 1.
  Matrix cycle(4, 4);
  const int ring[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  for (auto& [u, v] : ring) cycle(u, v) = cycle(v, u) = 1.0;
  Matrix reg = normalize_adjacency(cycle);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 4; ++j) sum += reg(i, j);
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }

  Matrix negative(2, 2);
  negative(0, 1) = negative(1, 0) = -0.5;
  CHECK_THROWS_AS(normalize_adjacency(negative), RangeError);

  Matrix asym(2, 2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(normalize_adjacency(asym), Error);
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most 1") {
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    SparseGraph g = toy_graph(6 + 14 * trial, 0.15, 3, 100 + trial);
    Vec mask(g.num_edges());
    for (double& v : mask) v = rng.uniform();
    Matrix norm = normalize_adjacency(dense_masked_adjacency(g, mask));
    for (int i = 0; i < norm.rows(); ++i)
      for (int j = 0; j < i; ++j)
        CHECK(std::abs(norm(i, j) - norm(j, i)) <= 1e-12);
    CHECK(gpig_test::spectral_radius(norm) <= 1.0 + 1e-9);
  }
}

TEST_CASE("symmetrize_gradient averages a matrix with its transpose") {
  Matrix m(2, 2);
  m(0, 1) = 2.0;
  Matrix s = symmetrize_gradient(m);
  CHECK(s(0, 1) == Catch::Approx(1.0));
  CHECK(s(1, 0) == Catch::Approx(1.0));
  CHECK(s(0, 0) == 0.0);

  Matrix sym(2, 2);
  sym(0, 1) = sym(1, 0) = 3.0;
  sym(0, 0) = 1.0;
  sym(1, 1) = -2.0;
  Matrix fixed = symmetrize_gradient(sym);
  CHECK(fixed.data() == sym.data());
}

TEST_CASE("sparse propagation matches the dense normalized pipeline") {
  SparseGraph g = toy_graph(10, 0.2, 4, 7);
  TinyGCN gcn = init_tiny_gcn({4, 6, 5, 2}, 3);
  Rng rng(9);
  Vec mask(g.num_edges());
  for (double& v : mask) v = rng.uniform();

  Matrix ahat = normalize_adjacency(dense_masked_adjacency(g, mask));
  auto relu_m = [](Matrix x) {
    for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
    return x;
  };
  Matrix h1 = relu_m(matmul(matmul(ahat, g.node_features), gcn.theta1));
  Matrix h2 = relu_m(matmul(matmul(ahat, h1), gcn.theta2));
  Matrix dense_logits = matmul(matmul(ahat, h2), gcn.theta3);

  Matrix sparse_logits = gcn_logits(gcn, g, EdgeMask(mask));
  for (int i = 0; i < dense_logits.rows(); ++i)
    for (int j = 0; j < dense_logits.cols(); ++j)
      CHECK(sparse_logits(i, j) ==
            Catch::Approx(dense_logits(i, j)).margin(1e-10));
}

TEST_CASE("edge oracle endpoints: full graph and features-only limits") {
  SparseGraph g = toy_graph(9, 0.25, 3, 15);
  TinyGCN gcn = init_tiny_gcn({3, 5, 4, 2}, 11);
  TrainReport report = train_gcn(gcn, g, 15, 0.3);
  CHECK(std::isfinite(report.final_loss));
  auto obj = gnn_edge_objective(gcn, g);

  double full = 0.0;
  int count = 0;
  Matrix logits = gcn_logits(gcn, g, EdgeMask::ones(g.num_edges()));
  for (int u = 0; u < g.num_nodes; ++u) {
    if (!g.train_mask[u]) continue;
    Vec row = logits.row(u);
    full += row[g.labels[u]] - logsumexp(row);
    ++count;
  }
  CHECK(obj.value(FeatureMask::ones(g.num_edges())) ==
        Catch::Approx(full / count).margin(1e-12));

  // All edges off: propagation degenerates to the identity.
  auto relu_v = [](Vec z) {
    for (double& v : z) v = v > 0.0 ? v : 0.0;
    return z;
  };
  double isolated = 0.0;
  for (int u = 0; u < g.num_nodes; ++u) {
    if (!g.train_mask[u]) continue;
    Vec h1 = relu_v(matvec_transposed(gcn.theta1, g.node_features.row(u)));
    Vec h2 = relu_v(matvec_transposed(gcn.theta2, h1));
    Vec z3 = matvec_transposed(gcn.theta3, h2);
    isolated += z3[g.labels[u]] - logsumexp(z3);
  }
  CHECK(obj.value(FeatureMask::zeros(g.num_edges())) ==
        Catch::Approx(isolated / count).margin(1e-10));
}

TEST_CASE("edge oracle requires a trained model") {
  SparseGraph g = toy_graph(6, 0.3, 3, 2);
  TinyGCN gcn = init_tiny_gcn({3, 4, 4, 2}, 1);
  CHECK_THROWS_AS(gnn_edge_objective(gcn, g), Error);
}

TEST_CASE("edge oracle gradient passes finite differences") {
  SparseGraph g = toy_graph(12, 0.2, 3, 19);
  TinyGCN gcn = init_tiny_gcn({3, 6, 5, 2}, 23);
  train_gcn(gcn, g, 20, 0.3);
  auto obj = gnn_edge_objective(gcn, g);
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    Vec mask(g.num_edges());
    for (double& v : mask) v = rng.uniform(0.1, 0.9);
    CHECK(grad_check(obj, FeatureMask(mask), 1e-5) <= 1e-4);
  }
}

TEST_CASE("edge gradient is invariant to the input orientation of edges") {
  SparseGraph g = toy_graph(8, 0.3, 3, 27);
  SparseGraph flipped = g;
  std::vector<std::pair<int, int>> reversed;
  for (auto [u, v] : g.edges) reversed.push_back({v, u});
  flipped.edges = canonical_edges(reversed, g.num_nodes);
  REQUIRE(flipped.edges == g.edges);

  TinyGCN gcn = init_tiny_gcn({3, 5, 4, 2}, 3);
  train_gcn(gcn, g, 10, 0.3);
  auto a = gnn_edge_objective(gcn, g);
  auto b = gnn_edge_objective(gcn, flipped);
  Vec mask(g.num_edges(), 0.5);
  const Vec ga = a.value_and_gradient(FeatureMask(mask)).gradient;
  const Vec gb = b.value_and_gradient(FeatureMask(mask)).gradient;
  CHECK(ga == gb);
}

TEST_CASE("oracle per-edge gradient matches dense directed finite differences") {
  SparseGraph g = toy_graph(6, 0.4, 3, 39);
  TinyGCN gcn = init_tiny_gcn({3, 5, 4, 2}, 7);
  train_gcn(gcn, g, 12, 0.3);
  auto obj = gnn_edge_objective(gcn, g);
  Rng rng(55);
  Vec mask(g.num_edges());
  for (double& v : mask) v = rng.uniform(0.2, 0.8);
  const Vec oracle = obj.value_and_gradient(FeatureMask(mask)).gradient;

  // Directed gradient matrix by finite differences on the dense reference.
  const double h = 1e-6;
  Matrix m_dir(g.num_nodes, g.num_nodes);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
      Matrix sp = dense_masked_adjacency(g, mask);
      Matrix sm = dense_masked_adjacency(g, mask);
      sp(a, b) += h;
      sm(a, b) -= h;
      m_dir(a, b) =
          (dense_gcn_value(gcn, g, sp) - dense_gcn_value(gcn, g, sm)) /
          (2.0 * h);
    }
  }
  const Matrix sym = symmetrize_gradient(m_dir);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    // The shared undirected mask collects both directed contributions, so the
    // oracle equals the sum of the two symmetrized entries.
    CHECK(oracle[e] ==
          Catch::Approx(sym(u, v) + sym(v, u)).margin(1e-5));
    CHECK(oracle[e] ==
          Catch::Approx(m_dir(u, v) + m_dir(v, u)).margin(1e-5));
  }
}

TEST_CASE("single-node explanations vanish outside the 3-hop neighborhood") {
  // Path 0-1-2-3-4-5-6-7 plus a feature matrix.
  SparseGraph g;
  g.num_nodes = 8;
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u + 1 < 8; ++u) edges.push_back({u, u + 1});
  g.edges = canonical_edges(std::move(edges), 8);
  Rng rng(3);
  g.node_features = Matrix(8, 3);
  for (double& v : g.node_features.data()) v = rng.normal();
  g.labels = {0, 1, 0, 1, 0, 1, 0, 1};
  g.train_mask.assign(8, 1);
  g.test_mask.assign(8, 0);
  g.test_mask[7] = 1;
  g.train_mask[7] = 0;

  TinyGCN gcn = init_tiny_gcn({3, 4, 4, 2}, 9);
  train_gcn(gcn, g, 10, 0.2);
  auto obj = gnn_edge_objective(gcn, g, 0);
  Vec mask(g.num_edges(), 0.7);
  const Vec grad = obj.value_and_gradient(FeatureMask(mask)).gradient;
  const auto dist = hop_distances(g, 0);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    if (dist[u] > 3 || dist[v] > 3) CHECK(grad[e] == 0.0);
  }
  // The first path edge is inside the neighborhood and genuinely active.
  CHECK(grad[0] != 0.0);
}

TEST_CASE("baseline selectors cover the ratio extremes deterministically") {
  SparseGraph g = toy_graph(14, 0.3, 3, 44);
  for (auto kind : {EdgeSelectorKind::kUniform, EdgeSelectorKind::kDegreeWeighted}) {
    auto all = baseline_edge_selector(g, kind, 1.0, 5);
    CHECK(static_cast<int>(all.size()) == g.num_edges());
    auto none = baseline_edge_selector(g, kind, 0.0, 5);
    CHECK(none.empty());
    auto a = baseline_edge_selector(g, kind, 0.5, 5);
    auto b = baseline_edge_selector(g, kind, 0.5, 5);
    CHECK(a == b);
  }
  CHECK_THROWS_AS(baseline_edge_selector(g, EdgeSelectorKind::kUniform, 1.5, 1),
                  RangeError);

  SparseGraph two;
  two.num_nodes = 2;
  two.edges = {{0, 1}};
  two.node_features = Matrix(2, 1, 1.0);
  two.labels = {0, 1};
  two.train_mask = {1, 0};
  two.test_mask = {0, 1};
  auto only =
      baseline_edge_selector(two, EdgeSelectorKind::kDegreeWeighted, 1.0, 3);
  CHECK(only == std::vector<int>{0});
}

TEST_CASE("compression curve endpoints are exact") {
  SparseGraph g = make_sbm_graph({12, 12}, 0.5, 0.05, 4, 13);
  TinyGCN gcn = init_tiny_gcn({4, 8, 8, 2}, 5);
  train_gcn(gcn, g, 60, 0.4);

  auto order = baseline_edge_order(g, EdgeSelectorKind::kUniform, 11);
  auto curve = compression_curve(gcn, g, order, {0.0, 0.5, 1.0});
  CHECK(curve.points.front().accuracy ==
        gcn_accuracy(gcn, g, EdgeMask::zeros(g.num_edges())));
  CHECK(curve.points.back().accuracy == curve.full_reference);
  CHECK(curve.full_reference ==
        gcn_accuracy(gcn, g, EdgeMask::ones(g.num_edges())));

  auto again = compression_curve(gcn, g, order, {0.0, 0.5, 1.0});
  for (size_t i = 0; i < curve.points.size(); ++i)
    CHECK(curve.points[i].accuracy == again.points[i].accuracy);

  CHECK_THROWS_AS(compression_curve(gcn, g, order, {0.5, 0.2}), RangeError);
}

TEST_CASE("trained GCN separates the default SBM blocks") {
  SparseGraph g = make_sbm_graph({60, 60}, 0.2, 0.02, 8, 1);
  TrainReport report;
  TinyGCN gcn = train_new_gcn({8, 16, 16, 2}, g, 200, 0.5, 7, &report);
  CHECK(std::isfinite(report.final_loss));
  CHECK(gcn_accuracy(gcn, g, EdgeMask::ones(g.num_edges())) >= 0.9);
}

TEST_CASE("GCN training is bit reproducible") {
  SparseGraph g = make_sbm_graph({10, 10}, 0.4, 0.05, 3, 21);
  TinyGCN a = train_new_gcn({3, 6, 6, 2}, g, 30, 0.3, 13);
  TinyGCN b = train_new_gcn({3, 6, 6, 2}, g, 30, 0.3, 13);
  CHECK(a.theta1.data() == b.theta1.data());
  CHECK(a.theta2.data() == b.theta2.data());
  CHECK(a.theta3.data() == b.theta3.data());
}
