#include "unrollkit/forward_model.hpp"

#include "unrollkit/fft.hpp"

#include <numbers>
#include <random>

namespace unrollkit {

CoilSensitivities<float> simulate_sensitivities(Index nx, Index ny, Index ncoils, std::uint64_t seed)
{
  if (ncoils < 1 || nx < 1 || ny < 1) {
    throw Error("simulate_sensitivities: need ncoils >= 1 and positive extents");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double const rotation = std::numbers::pi * uni(rng);

  CTensor<double> maps({ncoils, nx, ny});
  double const cx = nx / 2, cy = ny / 2;
  double const width = 0.45 * std::max(nx, ny);
  for (Index c = 0; c < ncoils; c++) {
    double const phi = rotation + 2.0 * std::numbers::pi * c / ncoils;
    double const px = cx + 0.55 * nx * std::cos(phi);
    double const py = cy + 0.55 * ny * std::sin(phi);
    double const gx = 0.6 * std::numbers::pi * uni(rng) / nx;
    double const gy = 0.6 * std::numbers::pi * uni(rng) / ny;
    double const p0 = std::numbers::pi * uni(rng);
    for (Index x = 0; x < nx; x++) {
      for (Index y = 0; y < ny; y++) {
        double const d2 = ((x - px) * (x - px) + (y - py) * (y - py)) / (width * width);
        double const mag = std::exp(-0.5 * d2) + 1e-3;
        double const ph = p0 + gx * (x - cx) + gy * (y - cy);
        maps(c, x, y) = std::polar(mag, ph);
      }
    }
  }
  for (Index x = 0; x < nx; x++) {
    for (Index y = 0; y < ny; y++) {
      double ss = 0.0;
      for (Index c = 0; c < ncoils; c++) {
        ss += std::norm(maps(c, x, y));
      }
      double const inv = 1.0 / std::sqrt(ss);
      for (Index c = 0; c < ncoils; c++) {
        maps(c, x, y) *= inv;
      }
    }
  }
  return {maps.cast<std::complex<float>>()};
}

template <typename Real>
EncodingOperator<Real>::EncodingOperator(CoilSensitivities<Real> sens, MaskGrid const &mask)
  : sens_(std::move(sens))
  , mask_(mask)
{
  if (sens_.maps.rank() != 3) {
    throw Error("sensitivities must have shape [ncoils, nx, ny]");
  }
  if (mask.rows() != nx() || mask.cols() != ny()) {
    throw Error("mask extents do not match sensitivities");
  }
  Index const plane = nx() * ny();
  sens_uncentered_ = CTensor<Real>(sens_.maps.shape());
  for (Index c = 0; c < ncoils(); c++) {
    fft::ifftshift_plane(sens_.maps.data() + c * plane, sens_uncentered_.data() + c * plane, nx(), ny());
  }
  CTensor<Real> m({nx(), ny()});
  for (Index x = 0; x < nx(); x++) {
    for (Index y = 0; y < ny(); y++) {
      m(x, y) = mask(x, y) ? Real(1) : Real(0);
    }
  }
  CTensor<Real> mu({nx(), ny()});
  fft::ifftshift_plane(m.data(), mu.data(), nx(), ny());
  // fold both orthonormal scalings of the forward/inverse pair into the mask
  mask_uncentered_ = mu.vec().real().array() / static_cast<Real>(plane);
  line_mask_ = is_line_mask(mask);
  if (line_mask_) {
    // F_x cancels against its adjoint when the mask does not vary along kx
    line_uncentered_ = mask_uncentered_.head(ny()) * static_cast<Real>(nx());
  }
}

template <typename Real>
void EncodingOperator<Real>::check_image(CTensor<Real> const &img) const
{
  if (img.rank() != 3 || img.dim(1) != nx() || img.dim(2) != ny()) {
    throw Error("encoding operator: image shape " + ShapeString(img.shape()) + " incompatible with " +
                std::to_string(nx()) + "x" + std::to_string(ny()) + " sensitivities");
  }
}

template <typename Real>
CTensor<Real> EncodingOperator<Real>::forward(CTensor<Real> const &img) const
{
  check_image(img);
  Index const nt = img.dim(0);
  Index const plane = nx() * ny();
  CTensor<Real> coil_img({ncoils(), nt, nx(), ny()});
  for (Index c = 0; c < ncoils(); c++) {
    auto const s = sens_.maps.vec().segment(c * plane, plane).array();
    for (Index t = 0; t < nt; t++) {
      coil_img.vec().segment((c * nt + t) * plane, plane).array() = s * img.vec().segment(t * plane, plane).array();
    }
  }
  return retrospective_undersample(fft2c(coil_img), mask_);
}

template <typename Real>
CTensor<Real> EncodingOperator<Real>::adjoint(CTensor<Real> const &ksp) const
{
  if (ksp.rank() != 4 || ksp.dim(0) != ncoils() || ksp.dim(2) != nx() || ksp.dim(3) != ny()) {
    throw Error("adjoint: k-space shape " + ShapeString(ksp.shape()) + " incompatible with operator");
  }
  Index const nt = ksp.dim(1);
  Index const plane = nx() * ny();
  CTensor<Real> const coil_img = ifft2c(retrospective_undersample(ksp, mask_));
  CTensor<Real> out({nt, nx(), ny()});
  for (Index c = 0; c < ncoils(); c++) {
    auto const s = sens_.maps.vec().segment(c * plane, plane).array().conjugate();
    for (Index t = 0; t < nt; t++) {
      out.vec().segment(t * plane, plane).array() += s * coil_img.vec().segment((c * nt + t) * plane, plane).array();
    }
  }
  return out;
}

template <typename Real>
CTensor<Real> EncodingOperator<Real>::normal(CTensor<Real> const &x, Real mu) const
{
  check_image(x);
  if (!(mu >= 0)) {
    throw Error("normal: mu must be >= 0");
  }
  Index const nt = x.dim(0);
  Index const plane = nx() * ny();
  Index const nc = ncoils();
  using Arr = Eigen::Array<std::complex<Real>, Eigen::Dynamic, 1>;
  Arr xs(plane), work(nc * plane);
  CTensor<Real> out(x.shape());
  auto const sens = sens_uncentered_.vec().array();
  for (Index t = 0; t < nt; t++) {
    fft::ifftshift_plane(x.data() + t * plane, xs.data(), nx(), ny());
    for (Index c = 0; c < nc; c++) {
      work.segment(c * plane, plane) = sens.segment(c * plane, plane) * xs;
    }
    if (line_mask_) {
      fft::forward_rows(work.data(), nc * nx(), ny());
      work.reshaped(ny(), nc * nx()).colwise() *= line_uncentered_.template cast<std::complex<Real>>();
      fft::inverse_rows(work.data(), nc * nx(), ny());
    } else {
      fft::forward_planes(work.data(), nc, nx(), ny());
      work.reshaped(plane, nc).colwise() *= mask_uncentered_.template cast<std::complex<Real>>();
      fft::inverse_planes(work.data(), nc, nx(), ny());
    }
    xs = sens.head(plane).conjugate() * work.head(plane);
    for (Index c = 1; c < nc; c++) {
      xs += sens.segment(c * plane, plane).conjugate() * work.segment(c * plane, plane);
    }
    fft::fftshift_plane(xs.data(), out.data() + t * plane, nx(), ny());
  }
  if (mu != 0) {
    out.vec() += mu * x.vec();
  }
  return out;
}

template <typename Real>
CTensor<Real> forward(CTensor<Real> const &x, CoilSensitivities<Real> const &sens, MaskGrid const &mask)
{
  return EncodingOperator<Real>(sens, mask).forward(x);
}

template <typename Real>
CTensor<Real> adjoint(CTensor<Real> const &y, CoilSensitivities<Real> const &sens, MaskGrid const &mask)
{
  return EncodingOperator<Real>(sens, mask).adjoint(y);
}

template <typename Real>
CTensor<Real> normal(CTensor<Real> const &x, CoilSensitivities<Real> const &sens, MaskGrid const &mask, Real mu)
{
  if (mu < 0) {
    throw Error("normal: mu must be >= 0");
  }
  return EncodingOperator<Real>(sens, mask).normal(x, mu);
}

template <typename Real>
CTensor<Real> retrospective_undersample(CTensor<Real> const &full_ksp, MaskGrid const &mask)
{
  if (full_ksp.rank() < 2 || full_ksp.dim(-2) != mask.rows() || full_ksp.dim(-1) != mask.cols()) {
    throw Error("retrospective_undersample: k-space " + ShapeString(full_ksp.shape()) + " does not match mask");
  }
  Index const plane = mask.size();
  CTensor<Real> out = full_ksp;
  Eigen::Map<Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> const> m(mask.data(), plane);
  for (Index p = 0; p < out.size() / plane; p++) {
    auto seg = out.vec().segment(p * plane, plane).array();
    seg = (m != 0).select(seg, std::complex<Real>(0));
  }
  return out;
}

template class EncodingOperator<float>;
template class EncodingOperator<double>;

template CTensor<float> forward(CTensor<float> const &, CoilSensitivities<float> const &, MaskGrid const &);
template CTensor<double> forward(CTensor<double> const &, CoilSensitivities<double> const &, MaskGrid const &);
template CTensor<float> adjoint(CTensor<float> const &, CoilSensitivities<float> const &, MaskGrid const &);
template CTensor<double> adjoint(CTensor<double> const &, CoilSensitivities<double> const &, MaskGrid const &);
template CTensor<float> normal(CTensor<float> const &, CoilSensitivities<float> const &, MaskGrid const &, float);
template CTensor<double> normal(CTensor<double> const &, CoilSensitivities<double> const &, MaskGrid const &, double);
template CTensor<float> retrospective_undersample(CTensor<float> const &, MaskGrid const &);
template CTensor<double> retrospective_undersample(CTensor<double> const &, MaskGrid const &);

} // namespace unrollkit
