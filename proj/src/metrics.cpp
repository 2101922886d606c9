#include "unrollkit/metrics.hpp"
#include "unrollkit/autodiff.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>

namespace unrollkit {

CropRegion crop_region(Index nx, Index ny)
{
  if (nx < 2 || ny < 2 || nx % 2 || ny % 2) {
    throw Error("crop_region: extents must be even, got " + std::to_string(nx) + "x" + std::to_string(ny));
  }
  CropRegion r;
  r.nx = nx / 2;
  r.ny = static_cast<Index>(std::lround(2.0 * static_cast<double>(ny) / 3.0));
  r.x0 = (nx - r.nx) / 2;
  r.y0 = (ny - r.ny) / 2;
  return r;
}

template <typename Real>
Tensor<Real> crop(Tensor<Real> const &t, CropRegion const &r)
{
  if (t.rank() < 2) {
    throw Error("crop: need at least two axes");
  }
  Index const nx = t.dim(-2), ny = t.dim(-1);
  if (r.x0 < 0 || r.y0 < 0 || r.nx < 1 || r.ny < 1 || r.x0 + r.nx > nx || r.y0 + r.ny > ny) {
    throw Error("crop: region does not fit in " + ShapeString(t.shape()));
  }
  Shape shape = t.shape();
  shape[shape.size() - 2] = r.nx;
  shape.back() = r.ny;
  Tensor<Real> out(shape);
  Index const planes = t.size() / (nx * ny);
  for (Index p = 0; p < planes; p++) {
    for (Index x = 0; x < r.nx; x++) {
      out.vec().segment((p * r.nx + x) * r.ny, r.ny) = t.vec().segment((p * nx + r.x0 + x) * ny + r.y0, r.ny);
    }
  }
  return out;
}

Tensor<float> magnitude(ComplexTensor const &x)
{
  return Tensor<float>(x.shape(), x.vec().cwiseAbs());
}

namespace {

void check_pair(Tensor<float> const &x, Tensor<float> const &ref, char const *what)
{
  RequireSameShape(x.shape(), ref.shape(), what);
  if (x.rank() < 2) {
    throw Error(std::string(what) + ": need [x, y] or [t, x, y] images");
  }
  if (!x.vec().allFinite() || !ref.vec().allFinite()) {
    throw Error(std::string(what) + ": non-finite input");
  }
}

} // namespace

double ssim(Tensor<float> const &x_full, Tensor<float> const &ref_full, CropRegion const &region)
{
  check_pair(x_full, ref_full, "ssim");
  auto const x = crop(x_full, region).cast<double>();
  auto const y = crop(ref_full, region).cast<double>();
  double const range = y.vec().maxCoeff();
  if (!(range > 0)) {
    throw Error("ssim: reference has zero data range inside the crop");
  }
  double const c1 = std::pow(kSsimK1 * range, 2), c2 = std::pow(kSsimK2 * range, 2);
  Index const nx = x.dim(-2), ny = x.dim(-1), planes = x.size() / (nx * ny);

  auto blur = [&](Eigen::VectorXd const &in) {
    Eigen::VectorXd out(in.size());
    nn::blur_planes(in.data(), out.data(), planes, nx, ny, kSsimSigma, kSsimRadius, false);
    return out;
  };
  Eigen::ArrayXd const mx = blur(x.vec()).array(), my = blur(y.vec()).array();
  Eigen::ArrayXd const sxx = blur(x.vec().cwiseProduct(x.vec())).array() - mx * mx;
  Eigen::ArrayXd const syy = blur(y.vec().cwiseProduct(y.vec())).array() - my * my;
  Eigen::ArrayXd const sxy = blur(x.vec().cwiseProduct(y.vec())).array() - mx * my;
  Eigen::ArrayXd const map = ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  // Each frame has the same pixel count, so the mean over frames equals the global mean.
  return map.mean();
}

double ssim(Tensor<float> const &x, Tensor<float> const &ref)
{
  return ssim(x, ref, crop_region(x.dim(-2), x.dim(-1)));
}

double nmrse(Tensor<float> const &x_full, Tensor<float> const &ref_full, CropRegion const &region)
{
  check_pair(x_full, ref_full, "nmrse");
  auto const x = crop(x_full, region).cast<double>();
  auto const y = crop(ref_full, region).cast<double>();
  double const denom = y.vec().norm();
  if (!(denom > 0)) {
    throw Error("nmrse: reference has zero norm inside the crop");
  }
  return (x.vec() - y.vec()).norm() / denom;
}

double nmrse(Tensor<float> const &x, Tensor<float> const &ref)
{
  return nmrse(x, ref, crop_region(x.dim(-2), x.dim(-1)));
}

double student_t_two_sided_p(double t, double dof)
{
  if (!(dof > 0) || !std::isfinite(t)) {
    throw Error("student_t_two_sided_p: invalid arguments");
  }
  boost::math::students_t_distribution<double> dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TTest paired_t_test(std::vector<double> const &a, std::vector<double> const &b)
{
  if (a.size() != b.size()) {
    throw Error("paired_t_test: samples differ in length");
  }
  Index const n = static_cast<Index>(a.size());
  if (n < 2) {
    throw Error("paired_t_test: need at least two pairs");
  }
  Eigen::ArrayXd d(n);
  for (Index i = 0; i < n; i++) {
    d[i] = a[i] - b[i];
  }
  double const mean = d.mean();
  double const var = (d - mean).square().sum() / static_cast<double>(n - 1);
  if (!(var > 0)) {
    throw Error("paired_t_test: differences have zero variance");
  }
  TTest r;
  r.n = n;
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  return r;
}

template Tensor<float> crop(Tensor<float> const &, CropRegion const &);
template Tensor<double> crop(Tensor<double> const &, CropRegion const &);

} // namespace unrollkit
