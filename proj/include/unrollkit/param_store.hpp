#pragma once

#include "autodiff.hpp"

#include <map>
#include <string>

namespace unrollkit::nn {

/* Named parameter tensors in insertion order. */
template <typename Scalar>
class ParamStore
{
public:
  void add(std::string const &name, Tensor<Scalar> value)
  {
    if (values_.count(name)) {
      throw Error("duplicate parameter name '" + name + "'");
    }
    names_.push_back(name);
    values_.emplace(name, std::move(value));
  }

  bool contains(std::string const &name) const { return values_.count(name) > 0; }

  Tensor<Scalar> &at(std::string const &name)
  {
    auto it = values_.find(name);
    if (it == values_.end()) {
      throw Error("missing parameter '" + name + "'");
    }
    return it->second;
  }
  Tensor<Scalar> const &at(std::string const &name) const { return const_cast<ParamStore *>(this)->at(name); }

  std::vector<std::string> const &names() const { return names_; }

  Index count() const
  {
    Index n = 0;
    for (auto const &[name, t] : values_) {
      n += t.size();
    }
    return n;
  }

  // Same names and shapes, all zero.
  ParamStore zeros_like() const
  {
    ParamStore z;
    for (auto const &n : names_) {
      z.add(n, Tensor<Scalar>(at(n).shape()));
    }
    return z;
  }

  template <typename Other>
  ParamStore<Other> cast() const
  {
    ParamStore<Other> out;
    for (auto const &n : names_) {
      out.add(n, at(n).template cast<Other>());
    }
    return out;
  }

  friend bool operator==(ParamStore const &a, ParamStore const &b)
  {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor<Scalar>> values_;
};

template <typename Scalar>
using Bound = std::map<std::string, Var>;

/* Places every parameter on the tape, as trainable leaves or as constants. */
template <typename Scalar>
Bound<Scalar> bind(Graph<Scalar> &g, ParamStore<Scalar> const &params, bool trainable)
{
  Bound<Scalar> b;
  for (auto const &n : params.names()) {
    b[n] = trainable ? g.parameter(params.at(n)) : g.constant(params.at(n));
  }
  return b;
}

template <typename Scalar>
void accumulate_grads(Graph<Scalar> &g, Bound<Scalar> const &bound, ParamStore<Scalar> &grads)
{
  for (auto const &[name, v] : bound) {
    if (g.has_grad(v)) {
      grads.at(name).vec() += g.grad(v).vec();
    }
  }
}

} // namespace unrollkit::nn
