#include "unrollkit/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <tuple>

namespace unrollkit {

namespace {

// FFTW planning is not thread-safe; execution through the new-array interface is.
std::mutex plan_mutex;

/* Plans are made with FFTW_ESTIMATE: measured plans can differ between runs,
 * which would break bit-reproducible training. Each geometry keeps an aligned
 * plan for SIMD-aligned buffers and an unaligned fallback.
 */
template <typename Real>
struct Fftw;

template <>
struct Fftw<float>
{
  using Plan = fftwf_plan;
  static Plan make(int rank, int const *n, int howmany, int sign, bool aligned)
  {
    int dist = 1;
    for (int i = 0; i < rank; i++) {
      dist *= n[i];
    }
    auto *buf = fftwf_alloc_complex(static_cast<size_t>(dist) * howmany);
    unsigned const flags = FFTW_ESTIMATE | (aligned ? 0u : FFTW_UNALIGNED);
    auto plan = fftwf_plan_many_dft(rank, n, howmany, buf, nullptr, 1, dist, buf, nullptr, 1, dist, sign, flags);
    fftwf_free(buf);
    return plan;
  }
  static bool aligned(void *p) { return fftwf_alignment_of(reinterpret_cast<float *>(p)) == 0; }
  static void run(Plan plan, std::complex<float> *data)
  {
    auto *p = reinterpret_cast<fftwf_complex *>(data);
    fftwf_execute_dft(plan, p, p);
  }
};

template <>
struct Fftw<double>
{
  using Plan = fftw_plan;
  static Plan make(int rank, int const *n, int howmany, int sign, bool aligned)
  {
    int dist = 1;
    for (int i = 0; i < rank; i++) {
      dist *= n[i];
    }
    auto *buf = fftw_alloc_complex(static_cast<size_t>(dist) * howmany);
    unsigned const flags = FFTW_ESTIMATE | (aligned ? 0u : FFTW_UNALIGNED);
    auto plan = fftw_plan_many_dft(rank, n, howmany, buf, nullptr, 1, dist, buf, nullptr, 1, dist, sign, flags);
    fftw_free(buf);
    return plan;
  }
  static bool aligned(void *p) { return fftw_alignment_of(reinterpret_cast<double *>(p)) == 0; }
  static void run(Plan plan, std::complex<double> *data)
  {
    auto *p = reinterpret_cast<fftw_complex *>(data);
    fftw_execute_dft(plan, p, p);
  }
};

// rank 1 transforms `count` rows of length n0; rank 2 transforms `count` n0 x n1 planes.
template <typename Real>
void execute(std::complex<Real> *data, int rank, Index n0, Index n1, Index count, int sign)
{
  using Key = std::tuple<int, Index, Index, Index, int, bool>;
  static std::map<Key, typename Fftw<Real>::Plan> cache;
  bool const aligned = Fftw<Real>::aligned(data);
  typename Fftw<Real>::Plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    Key const key{rank, n0, n1, count, sign, aligned};
    auto it = cache.find(key);
    if (it == cache.end()) {
      int const n[2] = {static_cast<int>(n0), static_cast<int>(n1)};
      it = cache.emplace(key, Fftw<Real>::make(rank, n, static_cast<int>(count), sign, aligned)).first;
    }
    plan = it->second;
  }
  Fftw<Real>::run(plan, data);
}

template <typename Real>
void shift_plane(std::complex<Real> const *in, std::complex<Real> *out, Index nx, Index ny, Index sx, Index sy)
{
  for (Index x = 0; x < nx; x++) {
    std::complex<Real> const *row = in + x * ny;
    std::complex<Real> *dst = out + ((x + sx) % nx) * ny;
    // rotate right by sy: the element at y lands at (y + sy) mod ny
    std::rotate_copy(row, row + (ny - sy) % ny, row + ny, dst);
  }
}

template <typename Real>
CTensor<Real> centered(CTensor<Real> const &in, bool inverse)
{
  if (in.rank() < 2) {
    throw Error("fft2c: expected at least two spatial axes, got " + ShapeString(in.shape()));
  }
  Index const nx = in.dim(-2);
  Index const ny = in.dim(-1);
  Index const plane = nx * ny;
  Index const planes = in.size() / plane;
  Real const scale = Real(1) / std::sqrt(static_cast<Real>(plane));
  CTensor<Real> work(in.shape());
  for (Index p = 0; p < planes; p++) {
    fft::ifftshift_plane(in.data() + p * plane, work.data() + p * plane, nx, ny);
  }
  if (inverse) {
    fft::inverse_planes(work.data(), planes, nx, ny);
  } else {
    fft::forward_planes(work.data(), planes, nx, ny);
  }
  CTensor<Real> out(in.shape());
  for (Index p = 0; p < planes; p++) {
    fft::fftshift_plane(work.data() + p * plane, out.data() + p * plane, nx, ny);
  }
  out.vec() *= scale;
  return out;
}

} // namespace

namespace fft {

template <typename Real>
void forward_plane(std::complex<Real> *plane, Index nx, Index ny)
{
  execute(plane, 2, nx, ny, 1, FFTW_FORWARD);
}

template <typename Real>
void inverse_plane(std::complex<Real> *plane, Index nx, Index ny)
{
  execute(plane, 2, nx, ny, 1, FFTW_BACKWARD);
}

template <typename Real>
void forward_planes(std::complex<Real> *data, Index count, Index nx, Index ny)
{
  execute(data, 2, nx, ny, count, FFTW_FORWARD);
}

template <typename Real>
void inverse_planes(std::complex<Real> *data, Index count, Index nx, Index ny)
{
  execute(data, 2, nx, ny, count, FFTW_BACKWARD);
}

template <typename Real>
void forward_rows(std::complex<Real> *data, Index rows, Index n)
{
  execute(data, 1, n, 1, rows, FFTW_FORWARD);
}

template <typename Real>
void inverse_rows(std::complex<Real> *data, Index rows, Index n)
{
  execute(data, 1, n, 1, rows, FFTW_BACKWARD);
}

template <typename Real>
void fftshift_plane(std::complex<Real> const *in, std::complex<Real> *out, Index nx, Index ny)
{
  shift_plane(in, out, nx, ny, nx / 2, ny / 2);
}

template <typename Real>
void ifftshift_plane(std::complex<Real> const *in, std::complex<Real> *out, Index nx, Index ny)
{
  shift_plane(in, out, nx, ny, nx - nx / 2, ny - ny / 2);
}

#define UNROLLKIT_FFT_INSTANTIATE(R)                                                      \
  template void forward_plane(std::complex<R> *, Index, Index);                           \
  template void inverse_plane(std::complex<R> *, Index, Index);                           \
  template void forward_planes(std::complex<R> *, Index, Index, Index);                   \
  template void inverse_planes(std::complex<R> *, Index, Index, Index);                   \
  template void forward_rows(std::complex<R> *, Index, Index);                            \
  template void inverse_rows(std::complex<R> *, Index, Index);                            \
  template void fftshift_plane(std::complex<R> const *, std::complex<R> *, Index, Index); \
  template void ifftshift_plane(std::complex<R> const *, std::complex<R> *, Index, Index);

UNROLLKIT_FFT_INSTANTIATE(float)
UNROLLKIT_FFT_INSTANTIATE(double)

} // namespace fft

template <typename Real>
CTensor<Real> fft2c(CTensor<Real> const &img)
{
  return centered(img, false);
}

template <typename Real>
CTensor<Real> ifft2c(CTensor<Real> const &ksp)
{
  return centered(ksp, true);
}

template CTensor<float> fft2c(CTensor<float> const &);
template CTensor<double> fft2c(CTensor<double> const &);
template CTensor<float> ifft2c(CTensor<float> const &);
template CTensor<double> ifft2c(CTensor<double> const &);

} // namespace unrollkit
