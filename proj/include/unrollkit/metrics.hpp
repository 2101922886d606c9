#pragma once

#include "tensor.hpp"

namespace unrollkit {

struct CropRegion
{
  Index x0 = 0, y0 = 0, nx = 0, ny = 0;

  friend bool operator==(CropRegion const &, CropRegion const &) = default;
};

// Centred (nx/2) x round(2 ny / 3) window.
CropRegion crop_region(Index nx, Index ny);

// Crops the last two axes of a [..., x, y] tensor.
template <typename Real>
Tensor<Real> crop(Tensor<Real> const &t, CropRegion const &r);

Tensor<float> magnitude(ComplexTensor const &x);

inline constexpr double kSsimSigma = 1.5;
inline constexpr Index kSsimRadius = 5; // 11 x 11 window
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/* Mean local SSIM of magnitude images [t, x, y] (or [x, y]) inside the crop,
 * averaged over frames. Data range is the reference maximum over the crop.
 * The Gaussian window is renormalised at the crop border.
 */
double ssim(Tensor<float> const &x, Tensor<float> const &ref, CropRegion const &crop);
double ssim(Tensor<float> const &x, Tensor<float> const &ref);

// ||x - ref|| / ||ref|| inside the crop.
double nmrse(Tensor<float> const &x, Tensor<float> const &ref, CropRegion const &crop);
double nmrse(Tensor<float> const &x, Tensor<float> const &ref);

struct TTest
{
  double t = 0, p = 1;
  Index n = 0;
};

// Two-sided paired t-test on d = a - b with n - 1 degrees of freedom.
TTest paired_t_test(std::vector<double> const &a, std::vector<double> const &b);

// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

} // namespace unrollkit
