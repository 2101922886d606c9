#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace unrollkit {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

Index NumElements(Shape const &shape);
std::string ShapeString(Shape const &shape);

/* Dense row-major n-dimensional array. Storage is an Eigen column vector so
 * elementwise work can go through .array() expressions. The axis order used
 * throughout is [channel/coil, t, x, y]; the last axis is contiguous.
 */
template <typename Scalar>
class Tensor
{
public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using scalar_type = Scalar;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Vector data);

  static Tensor Zero(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Constant(Shape shape, Scalar value);

  Shape const &shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return data_.size(); }

  Vector &vec() { return data_; }
  Vector const &vec() const { return data_; }
  auto array() { return data_.array(); }
  auto array() const { return data_.array(); }
  Scalar *data() { return data_.data(); }
  Scalar const *data() const { return data_.data(); }

  Scalar &operator[](Index i) { return data_[i]; }
  Scalar const &operator[](Index i) const { return data_[i]; }

  template <typename... Ix>
  Scalar &operator()(Ix... ix) { return data_[offset({static_cast<Index>(ix)...})]; }
  template <typename... Ix>
  Scalar const &operator()(Ix... ix) const { return data_[offset({static_cast<Index>(ix)...})]; }

  Index offset(std::initializer_list<Index> ix) const;

  // Same data, new shape with an equal element count.
  Tensor reshaped(Shape shape) const;

  template <typename Other>
  Tensor<Other> cast() const
  {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  void setZero() { data_.setZero(); }

  friend bool operator==(Tensor const &a, Tensor const &b)
  {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape shape_;
  Vector data_;
};

template <typename Real>
using CTensor = Tensor<std::complex<Real>>;

// The 32-bit complex tensor used for images, k-space and sensitivities.
using ComplexTensor = CTensor<float>;
using RealTensor = Tensor<float>;

void CheckShape(Shape const &shape);
void RequireSameShape(Shape const &a, Shape const &b, char const *what);

/* Element at position i along `axis` moves to (i + offset) mod extent. */
template <typename Scalar>
Tensor<Scalar> circ_shift(Tensor<Scalar> const &t, Index axis, Index offset);

/* Sum of conj(a_i) * b_i, accumulated in double precision. */
template <typename Real>
std::complex<double> inner(CTensor<Real> const &a, CTensor<Real> const &b);

/* Real inner product of real tensors, accumulated in double. */
template <typename Real>
double dot(Tensor<Real> const &a, Tensor<Real> const &b);

template <typename Real>
double norm(CTensor<Real> const &a);

// Complex [t, x, y] <-> real two-channel [2, t, x, y] (real part first).
template <typename Real>
Tensor<Real> to_two_channel(CTensor<Real> const &x);
template <typename Real>
CTensor<Real> from_two_channel(Tensor<Real> const &x);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<std::complex<float>>;
extern template class Tensor<std::complex<double>>;

} // namespace unrollkit
