// Copyright 2026 The urbanseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Central finite differences against the tape's analytic gradients, in
// double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "urbanseg/network.hpp"

namespace urbanseg::testing {

// Evaluates a scalar objective at `params`; fills `grads` (when non-null)
// with analytic gradients of every trainable tensor.
using Objective = std::function<double(const ParamTable<double>& params, ParamTable<double>* grads)>;

struct GradCheckResult {
  double worst = 0.0;  // max over tensors of |a - n| / max(|a| + |n|, floor)
  std::string worst_tensor;
  std::size_t entries = 0;
};

inline GradCheckResult grad_check(const Objective& f, ParamTable<double> params, double h = 1e-4,
                                  const std::function<bool(const std::string&)>& only = {}) {
  ParamTable<double> analytic;
  f(params, &analytic);
  double scale = 0.0;
  for (const auto& [name, g] : analytic) scale += g.squaredNorm();
  // Directions the objective is exactly invariant to (a bias feeding batch
  // norm) have a true gradient of zero; compare those against a floor tied
  // to the overall gradient size instead of dividing roundoff by roundoff.
  const double floor = 1e-6 * std::max(std::sqrt(scale), 1.0);
  GradCheckResult out;
  for (auto& [name, tensor] : params) {
    if (!is_trainable(name) || (only && !only(name))) continue;
    Mat<double> numeric(tensor.rows(), tensor.cols());
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double saved = tensor.data()[i];
      auto at = [&](double delta) {
        tensor.data()[i] = saved + delta;
        return f(params, nullptr);
      };
      // Five-point central stencil.
      numeric.data()[i] = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
      tensor.data()[i] = saved;
    }
    Mat<double> a = Mat<double>::Zero(tensor.rows(), tensor.cols());
    if (auto it = analytic.find(name); it != analytic.end() && it->second.size()) a = it->second;
    const double denom = std::max(a.norm() + numeric.norm(), floor);
    const double rel = (a - numeric).norm() / denom;
    out.entries += static_cast<std::size_t>(tensor.size());
    if (rel >= out.worst) {
      out.worst = rel;
      out.worst_tensor = name;
    }
  }
  return out;
}

// Collects analytic gradients of a context's parameter leaves after backward.
inline void collect_grads(const ForwardContext<double>& ctx, ParamTable<double>* grads) {
  if (!grads) return;
  for (const auto& [name, leaf] : ctx.leaves()) {
    if (leaf.requires_grad() && leaf.grad().size()) (*grads)[name] = leaf.grad();
  }
}

// sum(out .* R) for a fixed random R, so every output entry matters.
inline Var<double> random_projection(const Var<double>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  auto r = std::make_shared<Mat<double>>(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < r->size(); ++i) r->data()[i] = n(rng);
  return sum_all(scale_by(out, std::shared_ptr<const Mat<double>>(r)));
}

inline Mat<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace urbanseg::testing
