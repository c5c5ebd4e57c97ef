#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "acuity/autodiff.hpp"

// Central finite-difference oracle for reverse-mode gradients. `fn` must
// rebuild the graph from the leaf values on every call; the analytic path
// under test never feeds the numeric one.
namespace gradcheck {

struct Result {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-8) return 0.0;  // both effectively zero
  return std::abs(analytic - numeric) / denom;
}

// max_per_leaf = 0 checks every component; otherwise an evenly strided
// subset per leaf.
inline Result check(std::vector<acuity::ad::Var> leaves,
                    const std::function<acuity::ad::Var()>& fn, double eps = 1e-5,
                    std::size_t max_per_leaf = 0) {
  using acuity::ad::backward;

  acuity::ad::Var loss = fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.push_back(leaf.grad().values());

  Result res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& value = leaves[li].value();
    const std::size_t n = value.size();
    const std::size_t step =
        (max_per_leaf == 0 || n <= max_per_leaf) ? 1 : (n + max_per_leaf - 1) / max_per_leaf;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double fp = fn().value()[0];
      value[i] = orig - eps;
      const double fm = fn().value()[0];
      value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic[li][i], numeric));
      ++res.checked;
    }
  }
  return res;
}

inline acuity::ad::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                        double lo = -1.0, double hi = 1.0) {
  acuity::ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Scalar probe: sum of `out` weighted by fixed coefficients, so every output
// component influences the loss. The weights must be drawn once, outside the
// rebuild lambda, or finite differences see a different function per call.
inline acuity::ad::Var probe(const acuity::ad::Var& out, const acuity::ad::Tensor& weights) {
  return acuity::ad::sum_all(acuity::ad::mul(out, acuity::ad::constant(weights)));
}

}  // namespace gradcheck
