#include "unrollkit/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace unrollkit {

Index NumElements(Shape const &shape)
{
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<Index>());
}

std::string ShapeString(Shape const &shape)
{
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); i++) {
    os << (i ? "," : "") << shape[i];
  }
  os << "]";
  return os.str();
}

void CheckShape(Shape const &shape)
{
  for (auto const d : shape) {
    if (d < 1) {
      throw Error("invalid shape " + ShapeString(shape) + ": extents must be >= 1");
    }
  }
}

void RequireSameShape(Shape const &a, Shape const &b, char const *what)
{
  if (a != b) {
    throw Error(std::string(what) + ": shape mismatch " + ShapeString(a) + " vs " + ShapeString(b));
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape)
  : shape_(std::move(shape))
{
  CheckShape(shape_);
  data_ = Vector::Zero(NumElements(shape_));
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Vector data)
  : shape_(std::move(shape))
  , data_(std::move(data))
{
  CheckShape(shape_);
  if (NumElements(shape_) != data_.size()) {
    throw Error("tensor data size does not match shape " + ShapeString(shape_));
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::Constant(Shape shape, Scalar value)
{
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const
{
  if (axis < 0) {
    axis += rank();
  }
  if (axis < 0 || axis >= rank()) {
    throw Error("axis " + std::to_string(axis) + " out of range for " + ShapeString(shape_));
  }
  return shape_[axis];
}

template <typename Scalar>
Index Tensor<Scalar>::offset(std::initializer_list<Index> ix) const
{
  Index off = 0;
  size_t a = 0;
  for (auto const i : ix) {
    off = off * shape_[a++] + i;
  }
  return off;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const
{
  if (NumElements(shape) != size()) {
    throw Error("cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename Scalar>
Tensor<Scalar> circ_shift(Tensor<Scalar> const &t, Index axis, Index offset)
{
  if (axis < 0 || axis >= t.rank()) {
    throw Error("circ_shift: invalid axis " + std::to_string(axis));
  }
  Index const extent = t.shape()[axis];
  Index outer = 1, inner = 1;
  for (Index a = 0; a < axis; a++) {
    outer *= t.shape()[a];
  }
  for (Index a = axis + 1; a < t.rank(); a++) {
    inner *= t.shape()[a];
  }
  Index const s = ((offset % extent) + extent) % extent;
  Tensor<Scalar> out(t.shape());
  Scalar const *src = t.data();
  Scalar *dst = out.data();
  // two contiguous blocks per outer index: [0, extent - s) -> [s, extent) and the rest to the front
  for (Index o = 0; o < outer; o++) {
    Scalar const *from = src + o * extent * inner;
    Scalar *to = dst + o * extent * inner;
    std::copy_n(from, (extent - s) * inner, to + s * inner);
    std::copy_n(from + (extent - s) * inner, s * inner, to);
  }
  return out;
}

template <typename Real>
std::complex<double> inner(CTensor<Real> const &a, CTensor<Real> const &b)
{
  RequireSameShape(a.shape(), b.shape(), "inner");
  // Eigen's dot conjugates its left operand
  return a.vec().template cast<std::complex<double>>().dot(b.vec().template cast<std::complex<double>>());
}

template <typename Real>
double dot(Tensor<Real> const &a, Tensor<Real> const &b)
{
  RequireSameShape(a.shape(), b.shape(), "dot");
  return a.vec().template cast<double>().dot(b.vec().template cast<double>());
}

template <typename Real>
double norm(CTensor<Real> const &a)
{
  double acc = 0.0;
  for (Index i = 0; i < a.size(); i++) {
    acc += std::norm(std::complex<double>(a[i]));
  }
  return std::sqrt(acc);
}

template <typename Real>
Tensor<Real> to_two_channel(CTensor<Real> const &x)
{
  Shape shape{2};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  Tensor<Real> out(shape);
  Index const n = x.size();
  out.vec().head(n) = x.vec().real();
  out.vec().tail(n) = x.vec().imag();
  return out;
}

template <typename Real>
CTensor<Real> from_two_channel(Tensor<Real> const &x)
{
  if (x.rank() < 2 || x.shape()[0] != 2) {
    throw Error("from_two_channel: expected leading extent 2, got " + ShapeString(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  CTensor<Real> out(shape);
  Index const n = out.size();
  out.vec().real() = x.vec().head(n);
  out.vec().imag() = x.vec().tail(n);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<std::complex<float>>;
template class Tensor<std::complex<double>>;

template Tensor<float> circ_shift(Tensor<float> const &, Index, Index);
template Tensor<double> circ_shift(Tensor<double> const &, Index, Index);
template CTensor<float> circ_shift(CTensor<float> const &, Index, Index);
template CTensor<double> circ_shift(CTensor<double> const &, Index, Index);
template std::complex<double> inner(CTensor<float> const &, CTensor<float> const &);
template std::complex<double> inner(CTensor<double> const &, CTensor<double> const &);
template double dot(Tensor<float> const &, Tensor<float> const &);
template double dot(Tensor<double> const &, Tensor<double> const &);
template double norm(CTensor<float> const &);
template double norm(CTensor<double> const &);
template Tensor<float> to_two_channel(CTensor<float> const &);
template Tensor<double> to_two_channel(CTensor<double> const &);
template CTensor<float> from_two_channel(Tensor<float> const &);
template CTensor<double> from_two_channel(Tensor<double> const &);

} // namespace unrollkit
