#pragma once

#include "sampling.hpp"
#include "tensor.hpp"

namespace unrollkit {

template <typename Real>
struct CoilSensitivities
{
  CTensor<Real> maps; // [ncoils, nx, ny]

  Index ncoils() const { return maps.dim(0); }
  Index nx() const { return maps.dim(1); }
  Index ny() const { return maps.dim(2); }

  template <typename Other>
  CoilSensitivities<Other> cast() const
  {
    return {maps.template cast<std::complex<Other>>()};
  }
};

/* Smooth analytic coil profiles: Gaussian magnitude lobes centred on an
 * ellipse around the field of view with linear phase ramps, normalised so
 * that sum_c |S_c|^2 = 1 at every pixel.
 */
CoilSensitivities<float> simulate_sensitivities(Index nx, Index ny, Index ncoils, std::uint64_t seed);

/* E = M F S for images [t, x, y] and k-space [coil, t, x, y]. The mask is the
 * same for every coil and frame. Precomputes sensitivities and mask in
 * uncentered FFT order so the normal operator skips the per-coil shifts.
 */
template <typename Real>
class EncodingOperator
{
public:
  EncodingOperator(CoilSensitivities<Real> sens, MaskGrid const &mask);

  CTensor<Real> forward(CTensor<Real> const &img) const;
  CTensor<Real> adjoint(CTensor<Real> const &ksp) const;
  // (E^H E + mu I) x
  CTensor<Real> normal(CTensor<Real> const &x, Real mu) const;

  Index ncoils() const { return sens_.ncoils(); }
  Index nx() const { return sens_.nx(); }
  Index ny() const { return sens_.ny(); }
  MaskGrid const &mask() const { return mask_; }

private:
  void check_image(CTensor<Real> const &img) const;

  CoilSensitivities<Real> sens_;
  MaskGrid mask_;
  CTensor<Real> sens_uncentered_;
  Eigen::Array<Real, Eigen::Dynamic, 1> mask_uncentered_;
  // Masks made of full ky lines only need transforms along y in the normal operator.
  bool line_mask_ = false;
  Eigen::Array<Real, Eigen::Dynamic, 1> line_uncentered_;
};

template <typename Real>
CTensor<Real> forward(CTensor<Real> const &x, CoilSensitivities<Real> const &sens, MaskGrid const &mask);

template <typename Real>
CTensor<Real> adjoint(CTensor<Real> const &y, CoilSensitivities<Real> const &sens, MaskGrid const &mask);

template <typename Real>
CTensor<Real> normal(CTensor<Real> const &x, CoilSensitivities<Real> const &sens, MaskGrid const &mask, Real mu);

// mask * k-space, broadcast over every leading axis.
template <typename Real>
CTensor<Real> retrospective_undersample(CTensor<Real> const &full_ksp, MaskGrid const &mask);

extern template class EncodingOperator<float>;
extern template class EncodingOperator<double>;

} // namespace unrollkit
