#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "deeplle/rng.hpp"
#include "deeplle/tape.hpp"
#include "deeplle/tensor.hpp"
#include "doctest.h"

namespace testutil {

using deeplle::Rng;
using deeplle::Shape;
using deeplle::Tensor;

inline Tensor<double> rand_uniform(Shape shape, double lo, double hi, uint64_t seed) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = lo + (hi - lo) * rng.uniform01();
  return t;
}

// Uniform with |x| >= margin, for ops with kinks at zero.
inline Tensor<double> rand_away_from_zero(Shape shape, double margin, uint64_t seed) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) {
    double mag = margin + rng.uniform01();
    t.at(i) = (rng.uniform01() < 0.5 ? -mag : mag);
  }
  return t;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  bool ok = true;
  std::string detail;
};

// Central finite differences against tape gradients, 64-bit. `build` maps
// parameter vars to a scalar loss var and must be deterministic across calls.
template <typename BuildFn>
GradCheckResult check_gradients(const std::vector<Tensor<double>>& params, BuildFn build,
                                double tol = 1e-3, double abs_floor = 1e-8) {
  using Tape = deeplle::Tape<double>;
  auto eval = [&](const std::vector<Tensor<double>>& ps) {
    Tape tape;
    std::vector<Tape::Var> vars;
    vars.reserve(ps.size());
    for (const auto& p : ps) vars.push_back(tape.parameter(p));
    auto loss = build(tape, vars);
    return tape.value(loss).at(0);
  };

  std::vector<Tensor<double>> analytic;
  {
    Tape tape;
    std::vector<Tape::Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    auto loss = build(tape, vars);
    analytic = tape.backward(loss);
  }

  GradCheckResult res;
  std::vector<Tensor<double>> work = params;
  for (size_t j = 0; j < params.size(); ++j) {
    for (int64_t i = 0; i < params[j].numel(); ++i) {
      const double theta = work[j].at(i);
      const double h = 1e-5 * std::max(1.0, std::abs(theta));
      work[j].at(i) = theta + h;
      const double fp = eval(work);
      work[j].at(i) = theta - h;
      const double fm = eval(work);
      work[j].at(i) = theta;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[j].at(i);
      const double err = std::abs(an - fd);
      const double rel = err / std::max({std::abs(an), std::abs(fd), 1e-300});
      res.checked++;
      if (err > abs_floor && rel > tol) {
        res.ok = false;
        if (res.detail.empty())
          res.detail = "param " + std::to_string(j) + " entry " + std::to_string(i) +
                       ": analytic " + std::to_string(an) + " vs fd " + std::to_string(fd);
      }
      if (err > abs_floor) res.max_rel_err = std::max(res.max_rel_err, rel);
    }
  }
  return res;
}

}  // namespace testutil
