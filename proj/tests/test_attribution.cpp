#include "catch_amalgamated.hpp"

#include <cmath>

#include "gpig/attribution.hpp"
#include "gpig/models.hpp"
#include "gpig/objectives.hpp"
#include "gpig/synthetic.hpp"

using namespace gpig;

namespace {

// Independent quadrature oracle: composite Simpson over the gradient path.
Vec simpson_path_integral(const DifferentiableObjective& obj, int intervals) {
  const int n = obj.dimension();
  Vec acc(n, 0.0);
  auto grad_at = [&](double t) {
    return obj.value_and_gradient(FeatureMask::constant(n, t)).gradient;
  };
  const double h = 1.0 / intervals;
  for (int k = 0; k < intervals; ++k) {
    const Vec a = grad_at(k * h);
    const Vec m = grad_at((k + 0.5) * h);
    const Vec b = grad_at((k + 1) * h);
    for (int i = 0; i < n; ++i)
      acc[i] += h / 6.0 * (a[i] + 4.0 * m[i] + b[i]);
  }
  return acc;
}

}  // namespace

TEST_CASE("integrated gradients on a linear objective is exact for any T") {
  auto obj = modular_objective({3.0, 1.0});
  for (int steps : {1, 7, 64}) {
    auto result = integrated_gradients(obj, steps);
    CHECK(result.scores[0] == Catch::Approx(3.0));
    CHECK(result.scores[1] == Catch::Approx(1.0));
    CHECK(result.order == std::vector<int>{0, 1});
    CHECK(result.gradient_evals == steps);
  }
}

TEST_CASE("integrated gradients matches the regression closed form") {
  auto problem = linreg_solve(Matrix::identity(2), {1.0, 2.0});
  auto obj = linreg_objective(problem);
  auto result = integrated_gradients(obj, 1024);
  CHECK(std::abs(result.scores[0] - 1.0) <= 1e-6);
  CHECK(std::abs(result.scores[1] - 4.0) <= 1e-6);

  // Completeness: scores sum to g(1) - g(0) = 0 - (-5).
  const double total = result.scores[0] + result.scores[1];
  CHECK(std::abs(total - 5.0) <= 1e-6);

  // Independent Simpson quadrature agrees.
  const Vec reference = simpson_path_integral(obj, 501);
  CHECK(std::abs(result.scores[0] - reference[0]) <= 1e-8);
  CHECK(std::abs(result.scores[1] - reference[1]) <= 1e-8);
}

TEST_CASE("completeness holds at T=512 on smooth objectives") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 4 + rng.uniform_int(20);
    const int n = 2 + rng.uniform_int(5);
    Matrix a(m, n);
    for (double& v : a.data()) v = rng.normal();
    Vec b(m);
    for (double& v : b) v = rng.normal();
    auto obj = linreg_objective(linreg_solve(a, b));
    auto result = integrated_gradients(obj, 512);
    double total = 0.0;
    for (double s : result.scores) total += s;
    const double expected = obj.value(FeatureMask::ones(n)) -
                            obj.value(FeatureMask::zeros(n));
    CHECK(std::abs(total - expected) <= 1e-3 * (1.0 + std::abs(expected)));
  }
}

TEST_CASE("greedy_pig walks a single informative feature then the rest") {
  auto obj = modular_objective({1.0, 0.0});
  AlgoConfig config;
  config.rounds = 2;
  config.per_round = 1;
  config.steps = 16;
  auto result = greedy_pig(obj, config);
  CHECK(result.order == std::vector<int>{0, 1});
  CHECK(result.scores[0] == Catch::Approx(1.0));
  CHECK(result.scores[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("greedy_pig round-by-round on the identity regression instance") {
  auto problem = linreg_solve(Matrix::identity(2), {1.0, 2.0});
  auto obj = linreg_objective(problem);
  AlgoConfig config;
  config.rounds = 2;
  config.per_round = 1;
  config.steps = 1024;
  auto result = greedy_pig(obj, config);
  REQUIRE(result.rounds.size() == 2);
  CHECK(result.rounds[0].candidate_scores[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(result.rounds[0].candidate_scores[1] == Catch::Approx(4.0).margin(1e-6));
  CHECK(result.rounds[0].chosen == std::vector<int>{1});
  CHECK(result.rounds[1].candidate_scores[1] == 0.0);
  CHECK(result.order == std::vector<int>{1, 0});
  CHECK(result.scores[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(result.scores[1] == Catch::Approx(4.0).margin(1e-6));
  CHECK(result.gradient_evals == 2048);
}

TEST_CASE("sequential gradient equals greedy_pig on linear objectives") {
  auto obj = modular_objective({2.0, 5.0, 1.0});
  AlgoConfig config;
  config.rounds = 3;
  config.per_round = 1;
  config.steps = 32;
  auto greedy = greedy_pig(obj, config);
  auto sg = sequential_gradient(obj, 3, 1);
  CHECK(sg.order == greedy.order);
  for (int i = 0; i < 3; ++i)
    CHECK(sg.scores[i] == Catch::Approx(greedy.scores[i]));
  CHECK(sg.gradient_evals == 3);
}

TEST_CASE("sequential gradient shows its endpoint bias on s0 + s1^2") {
  DifferentiableObjective obj(2, "s0 + s1^2", [](const FeatureMask& m) {
    return EvalResult{m[0] + m[1] * m[1], {1.0, 2.0 * m[1]}};
  });
  auto sg = sequential_gradient(obj, 1, 1);
  CHECK(sg.rounds[0].candidate_scores[0] == Catch::Approx(1.0));
  CHECK(sg.rounds[0].candidate_scores[1] == Catch::Approx(0.0).margin(1e-15));
  CHECK(sg.order.front() == 0);

  AlgoConfig config;
  config.rounds = 1;
  config.per_round = 1;
  config.steps = 4096;
  auto greedy = greedy_pig(obj, config);
  CHECK(greedy.rounds[0].candidate_scores[1] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("sequential gradient on one feature reports grad g(0)") {
  DifferentiableObjective obj(1, "affine", [](const FeatureMask& m) {
    return EvalResult{3.0 * m[0], {3.0}};
  });
  auto sg = sequential_gradient(obj, 1, 1);
  CHECK(sg.order == std::vector<int>{0});
  CHECK(sg.scores[0] == Catch::Approx(3.0));
}

TEST_CASE("greedy_pig_groups degenerates to greedy_pig on singletons") {
  auto obj = modular_objective({0.5, 4.0, 2.0});
  AlgoConfig config;
  config.rounds = 3;
  config.per_round = 1;
  config.steps = 8;
  auto plain = greedy_pig(obj, config);
  config.groups = std::vector<std::vector<int>>{{0}, {1}, {2}};
  auto grouped = greedy_pig_groups(obj, config);
  CHECK(grouped.order == plain.order);
  for (int i = 0; i < 3; ++i)
    CHECK(grouped.scores[i] == Catch::Approx(plain.scores[i]));
}

TEST_CASE("greedy_pig_groups ranks groups by summed scores") {
  auto obj = modular_objective({1.0, 1.0, 10.0});
  AlgoConfig config;
  config.rounds = 2;
  config.per_round = 1;
  config.steps = 8;
  config.groups = std::vector<std::vector<int>>{{0, 1}, {2}};
  auto result = greedy_pig_groups(obj, config);
  CHECK(result.rounds[0].chosen == std::vector<int>{2});
  CHECK(result.order == std::vector<int>{2, 0, 1});
}

TEST_CASE("greedy_pig_groups with one covering group selects everything at once") {
  auto obj = modular_objective({1.0, -2.0, 3.0});
  AlgoConfig config;
  config.rounds = 4;
  config.per_round = 1;
  config.steps = 8;
  config.groups = std::vector<std::vector<int>>{{2, 0, 1}};
  auto result = greedy_pig_groups(obj, config);
  REQUIRE(result.rounds.size() == 1);
  for (int i = 0; i < 3; ++i)
    CHECK(result.scores[i] ==
          Catch::Approx(result.rounds[0].candidate_scores[i]));
  CHECK(result.order == std::vector<int>{0, 1, 2});
}

TEST_CASE("greedy_pig_groups validates the partition") {
  auto obj = modular_objective({1.0, 1.0, 1.0});
  AlgoConfig config;
  config.groups = std::vector<std::vector<int>>{{0}, {0, 2}};
  CHECK_THROWS_WITH(greedy_pig_groups(obj, config),
                    Catch::Matchers::ContainsSubstring("uncovered=[1]") &&
                        Catch::Matchers::ContainsSubstring("duplicated=[0]"));
}

TEST_CASE("minibatch schedule balances group sizes") {
  auto big = build_minibatch_schedule(150000, 39, 7);
  CHECK(big.groups.size() == 39);
  int total = 0;
  for (const auto& g : big.groups) {
    const int size = static_cast<int>(g.size());
    CHECK((size == 3846 || size == 3847));
    total += size;
  }
  CHECK(total == 150000);

  auto tiny = build_minibatch_schedule(10, 10, 1);
  for (const auto& g : tiny.groups) CHECK(g.size() == 1);

  auto uneven = build_minibatch_schedule(10, 3, 1);
  CHECK(uneven.groups[0].size() == 4);
  CHECK(uneven.groups[1].size() == 3);
  CHECK(uneven.groups[2].size() == 3);

  CHECK_THROWS_AS(build_minibatch_schedule(5, 6, 1), RangeError);
}

TEST_CASE("minibatch schedule covers all batches exactly once, deterministically") {
  auto a = build_minibatch_schedule(97, 13, 5);
  auto b = build_minibatch_schedule(97, 13, 5);
  CHECK(a.groups == b.groups);
  std::vector<int> seen(97, 0);
  for (const auto& g : a.groups)
    for (int idx : g) ++seen[idx];
  for (int c : seen) CHECK(c == 1);
}

TEST_CASE("separable telescoping: greedy covers the full value, scores are gains") {
  // Separable quadratic: g(s) = sum_i (a_i s_i - b_i s_i^2)
  const Vec lin{3.0, 1.5, 2.2, 0.7};
  const Vec quad{0.5, 0.2, 0.9, 0.1};
  DifferentiableObjective obj(4, "separable quadratic", [=](const FeatureMask& m) {
    EvalResult out;
    out.gradient.resize(4);
    for (int i = 0; i < 4; ++i) {
      out.value += lin[i] * m[i] - quad[i] * m[i] * m[i];
      out.gradient[i] = lin[i] - 2.0 * quad[i] * m[i];
    }
    return out;
  });
  SetFunctionView view(obj);
  AlgoConfig config;
  config.rounds = 4;
  config.per_round = 1;
  config.steps = 1024;
  auto result = greedy_pig(obj, config);
  double total = 0.0;
  for (double s : result.scores) total += s;
  const double expected =
      obj.value(FeatureMask::ones(4)) - obj.value(FeatureMask::zeros(4));
  CHECK(std::abs(total - expected) <= 1e-5);
  const double empty = view.eval({});
  for (int i = 0; i < 4; ++i)
    CHECK(result.scores[i] ==
          Catch::Approx(view.eval({i}) - empty).margin(1e-5));

  // One-shot scores match marginal gains on separable objectives too.
  auto ig = integrated_gradients(obj, 1024, RankingMode::kSigned);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(ig.scores[i] - (view.eval({i}) - empty)) <= 1e-6);
}

TEST_CASE("greedy bookkeeping: candidate scores vanish on the frozen set") {
  SoftmaxNet net = init_softmax_net({5, 10, 3}, 17);
  auto obj = topclass_objective(net, {1.0, -0.5, 2.0, 0.3, -1.2}, Vec(5, 0.0));
  AlgoConfig config;
  config.rounds = 3;
  config.per_round = 2;
  config.steps = 16;
  auto result = greedy_pig(obj, config);
  std::vector<int> frozen;
  int expected_total = 0;
  for (const auto& record : result.rounds) {
    for (int idx : frozen) CHECK(record.candidate_scores[idx] == 0.0);
    expected_total += static_cast<int>(record.chosen.size());
    CHECK(record.selected_total == expected_total);
    CHECK(static_cast<int>(record.chosen.size()) <= config.per_round);
    frozen.insert(frozen.end(), record.chosen.begin(), record.chosen.end());
  }
}

TEST_CASE("greedy with R*z >= n yields a full permutation and stops early") {
  auto obj = modular_objective({1.0, 2.0, 3.0, 4.0, 5.0});
  AlgoConfig config;
  config.rounds = 9;
  config.per_round = 2;
  config.steps = 4;
  auto result = greedy_pig(obj, config);
  std::vector<int> sorted = result.order;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(result.rounds.size() == 3);
  CHECK(result.rounds.back().chosen.size() == 1);
}

TEST_CASE("attribution is deterministic and thread-count independent") {
  SoftmaxNet net = init_softmax_net({6, 16, 4}, 23);
  auto obj = kl_objective(net, {1.0, -2.0, 0.5, 3.0, -0.7, 1.1}, Vec(6, 0.0));
  AlgoConfig config;
  config.rounds = 3;
  config.per_round = 2;
  config.steps = 32;
  auto first = greedy_pig(obj, config);
  auto second = greedy_pig(obj, config);
  CHECK(first.scores == second.scores);
  CHECK(first.order == second.order);

  config.threads = 4;
  auto threaded = greedy_pig(obj, config);
  CHECK(threaded.scores == first.scores);
  CHECK(threaded.order == first.order);

  auto ig1 = integrated_gradients(obj, 64, RankingMode::kAbsolute, 1);
  auto ig4 = integrated_gradients(obj, 64, RankingMode::kAbsolute, 4);
  CHECK(ig1.scores == ig4.scores);
  CHECK(ig1.order == ig4.order);
}

TEST_CASE("degenerate path yields all-zero attributions") {
  SoftmaxNet net = init_softmax_net({3, 8, 2}, 29);
  const Vec x{0.4, -1.0, 2.2};
  auto obj = topclass_objective(net, x, x);
  auto result = integrated_gradients(obj, 32);
  for (double s : result.scores) CHECK(s == 0.0);
}
