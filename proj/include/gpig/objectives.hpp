#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gpig/core.hpp"
#include "gpig/models.hpp"

namespace gpig {

inline int predicted_class(const SoftmaxNet& net, const Vec& input) {
  return mlp_predict(net, input);
}

// Softmax output of the frozen top class along the masked path (argmax ties
// break toward the lower class index, and the class never changes between
// calls on one objective instance).
inline DifferentiableObjective topclass_objective(const SoftmaxNet& net,
                                                  const Vec& input,
                                                  const Vec& baseline,
                                                  int target_class) {
  PathSpec path(baseline, input);
  if (path.dimension() != net.input_dim())
    throw DimensionError("objective input length " +
                         std::to_string(input.size()) + " vs model input dim " +
                         std::to_string(net.input_dim()));
  if (target_class < 0 || target_class >= net.num_classes())
    throw RangeError("target class " + std::to_string(target_class) +
                     " outside [0," + std::to_string(net.num_classes()) + ")");
  auto eval = [net, path, target_class](const FeatureMask& mask) {
    const Vec point = interpolate(path, mask);
    const Vec logits = mlp_logits(net, point);
    const Vec probs = softmax(logits);
    EvalResult out;
    out.value = probs[target_class];
    // d p_c / d logit_j = p_c (delta_cj - p_j)
    Vec logit_grad(probs.size());
    for (size_t j = 0; j < probs.size(); ++j)
      logit_grad[j] =
          probs[target_class] *
          ((static_cast<int>(j) == target_class ? 1.0 : 0.0) - probs[j]);
    const Vec input_grad = mlp_backward(net, point, logit_grad);
    out.gradient.resize(path.dimension());
    for (int i = 0; i < path.dimension(); ++i)
      out.gradient[i] = (path.input[i] - path.baseline[i]) * input_grad[i];
    return out;
  };
  return DifferentiableObjective(
      path.dimension(), "topclass(class=" + std::to_string(target_class) + ")",
      eval);
}

inline DifferentiableObjective topclass_objective(const SoftmaxNet& net,
                                                  const Vec& input,
                                                  const Vec& baseline) {
  return topclass_objective(net, input, baseline,
                            predicted_class(net, input));
}

// g(s) = sum_c f_c(x) log f_c(x_s), evaluated in log space so the log never
// sees a zero probability. The reported curve metric is KL(f(x) || f(x_s)),
// which equals g(1) - g(s).
inline DifferentiableObjective kl_objective(const SoftmaxNet& net,
                                            const Vec& input,
                                            const Vec& baseline) {
  PathSpec path(baseline, input);
  if (path.dimension() != net.input_dim())
    throw DimensionError("objective input length " +
                         std::to_string(input.size()) + " vs model input dim " +
                         std::to_string(net.input_dim()));
  const Vec reference = mlp_forward(net, input);
  auto eval = [net, path, reference](const FeatureMask& mask) {
    const Vec point = interpolate(path, mask);
    const Vec logits = mlp_logits(net, point);
    const double lse = logsumexp(logits);
    EvalResult out;
    out.value = dot(reference, logits) - lse;
    Vec logit_grad(logits.size());
    for (size_t j = 0; j < logits.size(); ++j)
      logit_grad[j] = reference[j] - std::exp(logits[j] - lse);
    const Vec input_grad = mlp_backward(net, point, logit_grad);
    out.gradient.resize(path.dimension());
    for (int i = 0; i < path.dimension(); ++i)
      out.gradient[i] = (path.input[i] - path.baseline[i]) * input_grad[i];
    return out;
  };
  return DifferentiableObjective(path.dimension(), "kl-to-full-output", eval);
}

inline double kl_divergence(const DifferentiableObjective& kl_obj,
                            const FeatureMask& mask) {
  return kl_obj.value(FeatureMask::ones(kl_obj.dimension())) -
         kl_obj.value(mask);
}

// Mean log-likelihood of the true labels over the dataset, with a shared
// baseline row and per-row interpolation. Row accumulation order is fixed.
inline DifferentiableObjective posthoc_objective(const SoftmaxNet& net,
                                                 const TabularDataset& data,
                                                 const Vec& baseline_row) {
  if (data.num_rows() < 1)
    throw DimensionError("posthoc_objective: empty dataset");
  if (static_cast<int>(baseline_row.size()) != data.num_features())
    throw DimensionError("baseline length " +
                         std::to_string(baseline_row.size()) +
                         " vs dataset features " +
                         std::to_string(data.num_features()));
  if (data.num_features() != net.input_dim())
    throw DimensionError("dataset features " +
                         std::to_string(data.num_features()) +
                         " vs model input dim " +
                         std::to_string(net.input_dim()));
  const int n = data.num_features();
  auto eval = [net, data, baseline_row, n](const FeatureMask& mask) {
    EvalResult out;
    out.gradient.assign(n, 0.0);
    const double inv_rows = 1.0 / data.num_rows();
    for (int r = 0; r < data.num_rows(); ++r) {
      const Vec row = data.rows.row(r);
      Vec point(n);
      for (int i = 0; i < n; ++i)
        point[i] = baseline_row[i] * (1.0 - mask[i]) + row[i] * mask[i];
      const Vec logits = mlp_logits(net, point);
      const double lse = logsumexp(logits);
      const int y = data.labels[r];
      out.value += (logits[y] - lse) * inv_rows;
      Vec logit_grad(logits.size());
      for (size_t c = 0; c < logits.size(); ++c)
        logit_grad[c] = ((static_cast<int>(c) == y ? 1.0 : 0.0) -
                         std::exp(logits[c] - lse)) *
                        inv_rows;
      const Vec input_grad = mlp_backward(net, point, logit_grad);
      for (int i = 0; i < n; ++i)
        out.gradient[i] += (row[i] - baseline_row[i]) * input_grad[i];
    }
    return out;
  };
  return DifferentiableObjective(
      n, "posthoc(rows=" + std::to_string(data.num_rows()) + ")", eval);
}

// Induced set function G(S) = g(1_S).
class SetFunctionView {
 public:
  explicit SetFunctionView(DifferentiableObjective objective)
      : objective_(std::move(objective)) {}

  int dimension() const { return objective_.dimension(); }
  const DifferentiableObjective& objective() const { return objective_; }

  double eval(const std::vector<int>& subset) const {
    return objective_.value(mask_from_selection(subset, objective_.dimension()));
  }

 private:
  DifferentiableObjective objective_;
};

inline double eval_set(const SetFunctionView& view,
                       const std::vector<int>& subset) {
  return view.eval(subset);
}

}  // namespace gpig
