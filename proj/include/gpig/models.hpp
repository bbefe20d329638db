#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gpig/core.hpp"
#include "gpig/linalg.hpp"
#include "gpig/rng.hpp"

namespace gpig {

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

struct LinRegProblem {
  Matrix design;  // A, m x n
  Vec targets;    // b, length m
  Vec solution;   // x*, length n, normal-equations minimizer
};

// Least squares through damped normal equations. When the Gram matrix is
// singular a diagonal damping of 1e-12 is added, which approximates the
// minimum-norm solution at desk scale.
inline LinRegProblem linreg_solve(const Matrix& a, const Vec& b) {
  if (a.rows() < 1 || a.cols() < 1)
    throw DimensionError("linreg_solve: empty design matrix (" +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + ")");
  if (static_cast<int>(b.size()) != a.rows())
    throw DimensionError("linreg_solve: design rows " +
                         std::to_string(a.rows()) + " vs target length " +
                         std::to_string(b.size()));
  Matrix g = gram(a);
  Vec rhs = matvec_transposed(a, b);
  auto x = solve_linear(g, rhs);
  if (!x) {
    for (int i = 0; i < g.rows(); ++i) g(i, i) += 1e-12;
    x = solve_linear(g, rhs);
  }
  if (!x) throw Error("linreg_solve: damped normal equations still singular");
  return LinRegProblem{a, b, *x};
}

// g(w) = -||A(x* .* w) - b||^2 with gradient -2 diag(x*) A^T (A(x* .* w) - b).
inline DifferentiableObjective linreg_objective(const LinRegProblem& problem) {
  const int n = problem.design.cols();
  auto eval = [problem](const FeatureMask& mask) {
    Vec scaled(problem.solution.size());
    for (size_t i = 0; i < scaled.size(); ++i)
      scaled[i] = problem.solution[i] * mask[static_cast<int>(i)];
    Vec residual = matvec(problem.design, scaled);
    for (size_t i = 0; i < residual.size(); ++i)
      residual[i] -= problem.targets[i];
    EvalResult out;
    out.value = -dot(residual, residual);
    Vec at = matvec_transposed(problem.design, residual);
    out.gradient.resize(at.size());
    for (size_t i = 0; i < at.size(); ++i)
      out.gradient[i] = -2.0 * problem.solution[i] * at[i];
    return out;
  };
  return DifferentiableObjective(
      n, "linreg(m=" + std::to_string(problem.design.rows()) +
             ",n=" + std::to_string(n) + ")",
      eval);
}

// ---------------------------------------------------------------------------
// Softmax MLP
// ---------------------------------------------------------------------------

inline double logsumexp(const Vec& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline Vec softmax(const Vec& logits) {
  const double lse = logsumexp(logits);
  Vec p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

// ReLU hidden layers, linear output; softmax applied by mlp_forward.
struct SoftmaxNet {
  std::vector<int> layer_dims;   // [n_in, hidden..., n_classes]
  std::vector<Matrix> weights;   // weights[l]: dims[l] x dims[l+1]
  std::vector<Vec> biases;       // biases[l]: dims[l+1]

  int input_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
};

inline SoftmaxNet init_softmax_net(const std::vector<int>& dims, uint64_t seed) {
  if (dims.size() < 2) throw DimensionError("need at least input and output layer dims");
  for (int d : dims)
    if (d < 1) throw DimensionError("layer dimension must be >= 1");
  SoftmaxNet net;
  net.layer_dims = dims;
  Rng rng = Rng(seed).substream("mlp-init");
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l], dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(dims[l + 1], 0.0);
  }
  return net;
}

struct MlpTrace {
  std::vector<Vec> activations;  // activations[0] = input; one per layer input
  std::vector<Vec> pre;          // pre[l] = linear output of layer l
};

inline MlpTrace mlp_trace(const SoftmaxNet& net, const Vec& input) {
  if (static_cast<int>(input.size()) != net.input_dim())
    throw DimensionError("mlp input length " + std::to_string(input.size()) +
                         " vs first layer dim " +
                         std::to_string(net.input_dim()));
  MlpTrace t;
  t.activations.push_back(input);
  Vec h = input;
  for (int l = 0; l < net.num_layers(); ++l) {
    Vec z = net.biases[l];
    const Matrix& w = net.weights[l];
    for (int i = 0; i < w.rows(); ++i) {
      const double hi = h[i];
      if (hi == 0.0) continue;
      const double* row = w.row_ptr(i);
      for (int j = 0; j < w.cols(); ++j) z[j] += hi * row[j];
    }
    t.pre.push_back(z);
    if (l + 1 < net.num_layers()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      t.activations.push_back(z);
      h = std::move(z);
    }
  }
  return t;
}

inline Vec mlp_logits(const SoftmaxNet& net, const Vec& input) {
  return mlp_trace(net, input).pre.back();
}

// Class probabilities via max-subtracted softmax.
inline Vec mlp_forward(const SoftmaxNet& net, const Vec& input) {
  return softmax(mlp_logits(net, input));
}

// Reverse pass from a gradient on the logits down to the input.
// ReLU subgradient at exactly 0 is 0.
inline Vec mlp_backward(const SoftmaxNet& net, const Vec& input,
                        const Vec& logit_grad) {
  if (static_cast<int>(logit_grad.size()) != net.num_classes())
    throw DimensionError("logit gradient length " +
                         std::to_string(logit_grad.size()) + " vs classes " +
                         std::to_string(net.num_classes()));
  MlpTrace t = mlp_trace(net, input);
  Vec g = logit_grad;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const Matrix& w = net.weights[l];
    Vec gh(w.rows(), 0.0);
    for (int i = 0; i < w.rows(); ++i) {
      const double* row = w.row_ptr(i);
      double s = 0.0;
      for (int j = 0; j < w.cols(); ++j) s += row[j] * g[j];
      gh[i] = s;
    }
    if (l > 0) {
      const Vec& z = t.pre[l - 1];
      for (int i = 0; i < w.rows(); ++i) gh[i] = z[i] > 0.0 ? gh[i] : 0.0;
    }
    g = std::move(gh);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Tabular data and training
// ---------------------------------------------------------------------------

struct TabularDataset {
  Matrix rows;              // N x n features
  std::vector<int> labels;  // length N
  int batch_size = 64;

  int num_rows() const { return rows.rows(); }
  int num_features() const { return rows.cols(); }
  int num_classes() const {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return std::max(c, 2);
  }
};

struct TrainReport {
  double final_loss = 0.0;
  int epochs = 0;
};

namespace detail {

inline double mlp_dataset_loss(const SoftmaxNet& net, const TabularDataset& data) {
  double loss = 0.0;
  for (int r = 0; r < data.num_rows(); ++r) {
    Vec logits = mlp_logits(net, data.rows.row(r));
    loss += logsumexp(logits) - logits[data.labels[r]];
  }
  return loss / data.num_rows();
}

}  // namespace detail

// Full-batch gradient descent on mean cross-entropy. Deterministic given the
// initial weights; row order is the dataset order.
inline TrainReport train_model(SoftmaxNet& net, const TabularDataset& data,
                               int epochs, double learning_rate) {
  if (data.num_rows() < 1) throw DimensionError("train_model: empty dataset");
  if (data.num_features() != net.input_dim())
    throw DimensionError("dataset features " +
                         std::to_string(data.num_features()) +
                         " vs model input dim " +
                         std::to_string(net.input_dim()));
  for (int y : data.labels)
    if (y < 0 || y >= net.num_classes())
      throw RangeError("label " + std::to_string(y) + " outside model classes");

  const int L = net.num_layers();
  const double inv_n = 1.0 / data.num_rows();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<Matrix> dw;
    std::vector<Vec> db;
    for (int l = 0; l < L; ++l) {
      dw.emplace_back(net.weights[l].rows(), net.weights[l].cols());
      db.emplace_back(net.biases[l].size(), 0.0);
    }
    double loss = 0.0;
    for (int r = 0; r < data.num_rows(); ++r) {
      const Vec x = data.rows.row(r);
      MlpTrace t = mlp_trace(net, x);
      const Vec& logits = t.pre.back();
      const double lse = logsumexp(logits);
      loss += lse - logits[data.labels[r]];
      Vec g(logits.size());
      for (size_t c = 0; c < g.size(); ++c)
        g[c] = (std::exp(logits[c] - lse) -
                (static_cast<int>(c) == data.labels[r] ? 1.0 : 0.0)) *
               inv_n;
      for (int l = L - 1; l >= 0; --l) {
        const Vec& act = t.activations[l];
        Matrix& dwl = dw[l];
        for (int i = 0; i < dwl.rows(); ++i) {
          const double ai = act[i];
          if (ai == 0.0) continue;
          double* row = dwl.row_ptr(i);
          for (int j = 0; j < dwl.cols(); ++j) row[j] += ai * g[j];
        }
        for (size_t j = 0; j < g.size(); ++j) db[l][j] += g[j];
        if (l > 0) {
          const Matrix& w = net.weights[l];
          Vec gh(w.rows(), 0.0);
          for (int i = 0; i < w.rows(); ++i) {
            const double* row = w.row_ptr(i);
            double s = 0.0;
            for (size_t j = 0; j < g.size(); ++j) s += row[j] * g[j];
            gh[i] = t.pre[l - 1][i] > 0.0 ? s : 0.0;
          }
          g = std::move(gh);
        }
      }
    }
    loss *= inv_n;
    if (!std::isfinite(loss))
      throw DivergenceError(
          "training loss is not finite; try a smaller learning rate");
    for (int l = 0; l < L; ++l) {
      for (size_t i = 0; i < net.weights[l].data().size(); ++i)
        net.weights[l].data()[i] -= learning_rate * dw[l].data()[i];
      for (size_t j = 0; j < net.biases[l].size(); ++j)
        net.biases[l][j] -= learning_rate * db[l][j];
    }
  }
  TrainReport report;
  report.epochs = epochs;
  report.final_loss = detail::mlp_dataset_loss(net, data);
  if (!std::isfinite(report.final_loss))
    throw DivergenceError(
        "training loss is not finite; try a smaller learning rate");
  return report;
}

inline SoftmaxNet train_new_model(const std::vector<int>& dims,
                                  const TabularDataset& data, int epochs,
                                  double learning_rate, uint64_t seed,
                                  TrainReport* report = nullptr) {
  SoftmaxNet net = init_softmax_net(dims, seed);
  TrainReport r = train_model(net, data, epochs, learning_rate);
  if (report) *report = r;
  return net;
}

inline int mlp_predict(const SoftmaxNet& net, const Vec& input) {
  Vec logits = mlp_logits(net, input);
  int best = 0;
  for (size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = static_cast<int>(c);
  return best;
}

inline double mlp_accuracy(const SoftmaxNet& net, const TabularDataset& data) {
  int hits = 0;
  for (int r = 0; r < data.num_rows(); ++r)
    if (mlp_predict(net, data.rows.row(r)) == data.labels[r]) ++hits;
  return static_cast<double>(hits) / data.num_rows();
}

// ---------------------------------------------------------------------------
// Tiny graph convolutional network (three propagation layers; the graph-side
// forward, training and edge oracle live with the graph types)
// ---------------------------------------------------------------------------

struct TinyGCN {
  std::vector<int> layer_dims;  // [feature_dim, h1, h2, n_classes]
  Matrix theta1, theta2, theta3;
  bool trained = false;

  int feature_dim() const { return layer_dims.front(); }
  int num_classes() const { return layer_dims.back(); }
};

inline TinyGCN init_tiny_gcn(const std::vector<int>& dims, uint64_t seed) {
  if (dims.size() != 4)
    throw DimensionError("TinyGCN needs exactly four layer dims, got " +
                         std::to_string(dims.size()));
  for (int d : dims)
    if (d < 1) throw DimensionError("layer dimension must be >= 1");
  TinyGCN gcn;
  gcn.layer_dims = dims;
  Rng rng = Rng(seed).substream("gcn-init");
  auto fill = [&rng](Matrix& w, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
  };
  gcn.theta1 = Matrix(dims[0], dims[1]);
  fill(gcn.theta1, dims[0]);
  gcn.theta2 = Matrix(dims[1], dims[2]);
  fill(gcn.theta2, dims[1]);
  gcn.theta3 = Matrix(dims[2], dims[3]);
  fill(gcn.theta3, dims[2]);
  return gcn;
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

// Central-difference check of the oracle gradient. Returns the worst relative
// error over coordinates, with an absolute floor of 1e-8 in the denominator.
inline double grad_check(const DifferentiableObjective& objective,
                         const FeatureMask& point, double step) {
  if (step <= 0.0) throw RangeError("grad_check step must be positive");
  for (int i = 0; i < point.size(); ++i)
    if (point[i] < step || point[i] > 1.0 - step)
      throw RangeError("grad_check point coordinate " + std::to_string(i) +
                       " = " + std::to_string(point[i]) +
                       " too close to the box boundary for step " +
                       std::to_string(step));
  const Vec analytic = objective.value_and_gradient(point).gradient;
  double worst = 0.0;
  for (int i = 0; i < point.size(); ++i) {
    Vec plus = point.values();
    Vec minus = point.values();
    plus[i] += step;
    minus[i] -= step;
    const double fd = (objective.value(FeatureMask(std::move(plus))) -
                       objective.value(FeatureMask(std::move(minus)))) /
                      (2.0 * step);
    const double denom =
        std::max(1e-8, std::max(std::abs(fd), std::abs(analytic[i])));
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace gpig
