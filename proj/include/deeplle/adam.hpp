#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "deeplle/check.hpp"
#include "deeplle/tensor.hpp"

namespace deeplle {

// Bias-corrected ADAM. Moment tensors mirror the parameter shapes.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const std::vector<Tensor<T>>& params) {
    AdamState s;
    s.first_moment.reserve(params.size());
    s.second_moment.reserve(params.size());
    for (const auto& p : params) {
      s.first_moment.emplace_back(p.shape());
      s.second_moment.emplace_back(p.shape());
    }
    return s;
  }
};

template <typename T>
void adam_step(std::vector<Tensor<T>*> params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr) {
  DLLE_CHECK(params.size() == grads.size(), "adam_step: ", params.size(), " params vs ",
             grads.size(), " grads");
  DLLE_CHECK(params.size() == state.first_moment.size(),
             "adam_step: state tracks ", state.first_moment.size(), " params, got ", params.size());
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t j = 0; j < params.size(); ++j) {
    Tensor<T>& p = *params[j];
    const Tensor<T>& g = grads[j];
    DLLE_CHECK(p.same_shape(g), "adam_step: param ", j, " shape ", shape_str(p.shape()),
               " vs grad ", shape_str(g.shape()));
    DLLE_CHECK(p.same_shape(state.first_moment[j]), "adam_step: param ", j,
               " shape drifted from optimizer state");
    Tensor<T>& m = state.first_moment[j];
    Tensor<T>& v = state.second_moment[j];
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g.at(i));
      const double mi = b1 * static_cast<double>(m.at(i)) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v.at(i)) + (1.0 - b2) * gi * gi;
      m.at(i) = static_cast<T>(mi);
      v.at(i) = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.at(i) = static_cast<T>(static_cast<double>(p.at(i)) -
                               lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

}  // namespace deeplle
