#pragma once

// Central finite-difference checks for graph ops, run in double precision.

#include "unrollkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace gradcheck {

using unrollkit::Index;
using unrollkit::Shape;
using T = unrollkit::Tensor<double>;
using G = unrollkit::nn::Graph<double>;
using unrollkit::nn::Var;

using Fn = std::function<Var(G &, std::vector<Var> const &)>;

inline T random_tensor(Shape shape, std::mt19937_64 &rng, double scale = 1.0)
{
  std::normal_distribution<double> n(0.0, scale);
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); i++) {
    t[i] = n(rng);
  }
  return t;
}

struct Result
{
  double rel_error = 0; // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  Index checked = 0;
};

/* Reduces f's output to a scalar with a fixed random weighting, then compares
 * the tape gradient of every input against central differences. At most
 * `max_entries` coordinates per input are probed (spread evenly).
 */
inline Result check(Fn const &f, std::vector<T> inputs, double eps = 1e-5, Index max_entries = 64,
                    std::uint64_t seed = 7)
{
  T weights;
  auto eval = [&](std::vector<T> const &in, std::vector<T> *grads) {
    G g;
    std::vector<Var> vars;
    for (auto const &t : in) {
      vars.push_back(g.parameter(t));
    }
    Var const out = f(g, vars);
    if (weights.size() == 0) {
      std::mt19937_64 rng(seed);
      weights = random_tensor(g.value(out).shape(), rng);
    }
    Var const loss = unrollkit::nn::sum(g, unrollkit::nn::mul(g, out, g.constant(weights)));
    double const value = g.value(loss)[0];
    if (grads) {
      g.backward(loss);
      for (auto const v : vars) {
        grads->push_back(g.has_grad(v) ? g.grad(v) : T(g.value(v).shape()));
      }
    }
    return value;
  };

  std::vector<T> analytic;
  eval(inputs, &analytic);
  double num_sq = 0, diff_sq = 0, ana_sq = 0;
  Result r;
  for (size_t k = 0; k < inputs.size(); k++) {
    Index const n = inputs[k].size();
    Index const stride = std::max<Index>(1, n / max_entries);
    for (Index i = 0; i < n; i += stride) {
      double const orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      double const up = eval(inputs, nullptr);
      inputs[k][i] = orig - eps;
      double const down = eval(inputs, nullptr);
      inputs[k][i] = orig;
      double const numeric = (up - down) / (2 * eps);
      double const a = analytic[k][i];
      num_sq += numeric * numeric;
      ana_sq += a * a;
      diff_sq += (a - numeric) * (a - numeric);
      r.checked++;
    }
  }
  double const denom = std::max({std::sqrt(num_sq), std::sqrt(ana_sq), 1e-300});
  r.rel_error = std::sqrt(diff_sq) / denom;
  return r;
}

} // namespace gradcheck
