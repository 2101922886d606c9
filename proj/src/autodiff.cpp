#include "unrollkit/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace unrollkit::nn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapRM = Eigen::Map<RowMat<S> const>;
template <typename S>
using StridedRM = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using CStridedRM = Eigen::Map<RowMat<S> const, 0, Eigen::OuterStride<>>;

template <typename S>
void same_shape(Graph<S> const &g, Var a, Var b, char const *op)
{
  RequireSameShape(g.value(a).shape(), g.value(b).shape(), op);
}

Index mod(Index a, Index n)
{
  return ((a % n) + n) % n;
}

struct ConvGeometry
{
  Index ci, nt, nx, ny, kh, kw, stride, pad, ox, oy;
  Index rows() const { return ci * kh * kw; }
  Index cols() const { return nt * ox * oy; }
};

// Frames per im2col chunk: roughly 2^13 output columns.
inline Index frames_per_chunk(ConvGeometry const &c)
{
  return std::clamp<Index>(8192 / std::max<Index>(1, c.ox * c.oy), 1, c.nt);
}

// Output columns [lo, hi) along one axis read in-bounds input for kernel tap `k`.
inline void valid_range(Index out, Index in, Index k, Index stride, Index pad, Index &lo, Index &hi)
{
  Index const first = pad - k, last = in - 1 + pad - k;
  lo = first > 0 ? (first + stride - 1) / stride : 0;
  hi = last >= 0 ? std::min<Index>(out, last / stride + 1) : 0;
  hi = std::max(hi, lo);
}

// Column matrix for frames [t0, t0 + tc): rows() x (tc * ox * oy).
template <typename S>
void im2col(S const *x, ConvGeometry const &c, Index t0, Index tc, S *cols)
{
  Index const n = tc * c.ox * c.oy;
  for (Index ch = 0; ch < c.ci; ch++) {
    for (Index i = 0; i < c.kh; i++) {
      Index xlo, xhi;
      valid_range(c.ox, c.nx, i, c.stride, c.pad, xlo, xhi);
      for (Index j = 0; j < c.kw; j++) {
        Index ylo, yhi;
        valid_range(c.oy, c.ny, j, c.stride, c.pad, ylo, yhi);
        S *row = cols + ((ch * c.kh + i) * c.kw + j) * n;
        for (Index t = 0; t < tc; t++) {
          S *plane = row + t * c.ox * c.oy;
          std::fill_n(plane, xlo * c.oy, S(0));
          std::fill(plane + xhi * c.oy, plane + c.ox * c.oy, S(0));
          for (Index xo = xlo; xo < xhi; xo++) {
            S *dst = plane + xo * c.oy;
            S const *src = x + ((ch * c.nt + t0 + t) * c.nx + xo * c.stride + i - c.pad) * c.ny + j - c.pad;
            std::fill_n(dst, ylo, S(0));
            std::fill(dst + yhi, dst + c.oy, S(0));
            if (c.stride == 1) {
              std::copy(src + ylo, src + yhi, dst + ylo);
            } else {
              for (Index yo = ylo; yo < yhi; yo++) {
                dst[yo] = src[yo * c.stride];
              }
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(S const *cols, ConvGeometry const &c, Index t0, Index tc, S *x)
{
  Index const n = tc * c.ox * c.oy;
  for (Index ch = 0; ch < c.ci; ch++) {
    for (Index i = 0; i < c.kh; i++) {
      Index xlo, xhi;
      valid_range(c.ox, c.nx, i, c.stride, c.pad, xlo, xhi);
      for (Index j = 0; j < c.kw; j++) {
        Index ylo, yhi;
        valid_range(c.oy, c.ny, j, c.stride, c.pad, ylo, yhi);
        S const *row = cols + ((ch * c.kh + i) * c.kw + j) * n;
        for (Index t = 0; t < tc; t++) {
          for (Index xo = xlo; xo < xhi; xo++) {
            S const *src = row + (t * c.ox + xo) * c.oy;
            S *dst = x + ((ch * c.nt + t0 + t) * c.nx + xo * c.stride + i - c.pad) * c.ny + j - c.pad;
            if (c.stride == 1) {
              for (Index yo = ylo; yo < yhi; yo++) {
                dst[yo] += src[yo];
              }
            } else {
              for (Index yo = ylo; yo < yhi; yo++) {
                dst[yo * c.stride] += src[yo];
              }
            }
          }
        }
      }
    }
  }
}

std::vector<double> gaussian_taps(double sigma, Index radius)
{
  std::vector<double> w(2 * radius + 1);
  for (Index k = -radius; k <= radius; k++) {
    w[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
  }
  return w;
}

// out[i] = sum_j w(i - j) in[j] / z[i] along one axis with element stride `step`.
template <typename S>
void blur_line(S const *in, S *out, Index n, Index step, std::vector<double> const &w, Index radius, bool transpose)
{
  std::vector<double> z(n, 0.0);
  for (Index i = 0; i < n; i++) {
    for (Index k = std::max<Index>(-radius, -i); k <= std::min<Index>(radius, n - 1 - i); k++) {
      z[i] += w[k + radius];
    }
  }
  for (Index i = 0; i < n; i++) {
    double acc = 0.0;
    for (Index k = std::max<Index>(-radius, -i); k <= std::min<Index>(radius, n - 1 - i); k++) {
      Index const j = i + k;
      acc += transpose ? w[k + radius] * static_cast<double>(in[j * step]) / z[j]
                       : w[k + radius] * static_cast<double>(in[j * step]);
    }
    out[i * step] = static_cast<S>(transpose ? acc : acc / z[i]);
  }
}

} // namespace

template <typename S>
void blur_planes(S const *in, S *out, Index planes, Index nx, Index ny, double sigma, Index radius, bool transpose)
{
  auto const w = gaussian_taps(sigma, radius);
  std::vector<S> tmp(nx * ny);
  for (Index p = 0; p < planes; p++) {
    S const *src = in + p * nx * ny;
    S *dst = out + p * nx * ny;
    // separable: along y, then along x (the transpose runs the same passes in reverse order)
    if (!transpose) {
      for (Index x = 0; x < nx; x++) {
        blur_line(src + x * ny, tmp.data() + x * ny, ny, 1, w, radius, false);
      }
      for (Index y = 0; y < ny; y++) {
        blur_line(tmp.data() + y, dst + y, nx, ny, w, radius, false);
      }
    } else {
      for (Index y = 0; y < ny; y++) {
        blur_line(src + y, tmp.data() + y, nx, ny, w, radius, true);
      }
      for (Index x = 0; x < nx; x++) {
        blur_line(tmp.data() + x * ny, dst + x * ny, ny, 1, w, radius, true);
      }
    }
  }
}

template <typename S>
Var add(Graph<S> &g, Var a, Var b)
{
  same_shape(g, a, b, "add");
  Tensor<S> out = g.value(a);
  out.vec() += g.value(b).vec();
  return g.record(std::move(out), {a, b}, [a, b](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    if (g.requires_grad(a)) g.grad(a).vec() += go;
    if (g.requires_grad(b)) g.grad(b).vec() += go;
  });
}

template <typename S>
Var sub(Graph<S> &g, Var a, Var b)
{
  same_shape(g, a, b, "sub");
  Tensor<S> out = g.value(a);
  out.vec() -= g.value(b).vec();
  return g.record(std::move(out), {a, b}, [a, b](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    if (g.requires_grad(a)) g.grad(a).vec() += go;
    if (g.requires_grad(b)) g.grad(b).vec() -= go;
  });
}

template <typename S>
Var mul(Graph<S> &g, Var a, Var b)
{
  same_shape(g, a, b, "mul");
  Tensor<S> out = g.value(a);
  out.array() *= g.value(b).array();
  return g.record(std::move(out), {a, b}, [a, b](Graph<S> &g, Var o) {
    auto const go = g.grad(o).array();
    if (g.requires_grad(a)) g.grad(a).array() += go * g.value(b).array();
    if (g.requires_grad(b)) g.grad(b).array() += go * g.value(a).array();
  });
}

template <typename S>
Var div(Graph<S> &g, Var a, Var b)
{
  same_shape(g, a, b, "div");
  Tensor<S> out = g.value(a);
  out.array() /= g.value(b).array();
  return g.record(std::move(out), {a, b}, [a, b](Graph<S> &g, Var o) {
    auto const go = g.grad(o).array();
    auto const bv = g.value(b).array();
    if (g.requires_grad(a)) g.grad(a).array() += go / bv;
    if (g.requires_grad(b)) g.grad(b).array() -= go * g.value(o).array() / bv;
  });
}

template <typename S>
Var scale(Graph<S> &g, Var a, S c)
{
  Tensor<S> out = g.value(a);
  out.vec() *= c;
  return g.record(std::move(out), {a}, [a, c](Graph<S> &g, Var o) { g.grad(a).vec() += c * g.grad(o).vec(); });
}

template <typename S>
Var add_scalar(Graph<S> &g, Var a, S c)
{
  Tensor<S> out = g.value(a);
  out.array() += c;
  return g.record(std::move(out), {a}, [a](Graph<S> &g, Var o) { g.grad(a).vec() += g.grad(o).vec(); });
}

template <typename S>
Var square(Graph<S> &g, Var a)
{
  Tensor<S> out = g.value(a);
  out.array() = out.array().square();
  return g.record(std::move(out), {a}, [a](Graph<S> &g, Var o) {
    g.grad(a).array() += S(2) * g.value(a).array() * g.grad(o).array();
  });
}

template <typename S>
Var exp(Graph<S> &g, Var a)
{
  Tensor<S> out = g.value(a);
  out.array() = out.array().exp();
  return g.record(std::move(out), {a}, [a](Graph<S> &g, Var o) {
    g.grad(a).array() += g.value(o).array() * g.grad(o).array();
  });
}

template <typename S>
Var relu(Graph<S> &g, Var a)
{
  Tensor<S> out = g.value(a);
  out.array() = out.array().max(S(0));
  return g.record(std::move(out), {a}, [a](Graph<S> &g, Var o) {
    g.grad(a).array() += (g.value(a).array() > S(0)).select(g.grad(o).array(), S(0));
  });
}

template <typename S>
Var sum(Graph<S> &g, Var a)
{
  Tensor<S> out({1});
  out[0] = static_cast<S>(g.value(a).vec().template cast<double>().sum());
  return g.record(std::move(out), {a}, [a](Graph<S> &g, Var o) { g.grad(a).array() += g.grad(o)[0]; });
}

template <typename S>
Var mean(Graph<S> &g, Var a)
{
  Index const n = g.value(a).size();
  Tensor<S> out({1});
  out[0] = static_cast<S>(g.value(a).vec().template cast<double>().sum() / n);
  return g.record(std::move(out), {a}, [a, n](Graph<S> &g, Var o) { g.grad(a).array() += g.grad(o)[0] / S(n); });
}

template <typename S>
Var concat_channels(Graph<S> &g, std::vector<Var> const &xs)
{
  if (xs.empty()) {
    throw Error("concat_channels: no inputs");
  }
  Shape shape = g.value(xs[0]).shape();
  Index total = 0;
  for (auto const v : xs) {
    auto const &s = g.value(v).shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw Error("concat_channels: trailing extents differ: " + ShapeString(s) + " vs " + ShapeString(shape));
    }
    total += s[0];
  }
  shape[0] = total;
  Tensor<S> out(shape);
  Index off = 0;
  for (auto const v : xs) {
    auto const &val = g.value(v).vec();
    out.vec().segment(off, val.size()) = val;
    off += val.size();
  }
  return g.record(std::move(out), xs, [xs](Graph<S> &g, Var o) {
    Index off = 0;
    auto const &go = g.grad(o).vec();
    for (auto const v : xs) {
      Index const n = g.value(v).size();
      if (g.requires_grad(v)) {
        g.grad(v).vec() += go.segment(off, n);
      }
      off += n;
    }
  });
}

template <typename S>
Var slice_channels(Graph<S> &g, Var x, Index begin, Index count)
{
  auto const &v = g.value(x);
  if (begin < 0 || count < 1 || begin + count > v.dim(0)) {
    throw Error("slice_channels: range out of bounds for " + ShapeString(v.shape()));
  }
  Shape shape = v.shape();
  shape[0] = count;
  Index const per = v.size() / v.dim(0);
  Tensor<S> out(shape, v.vec().segment(begin * per, count * per));
  return g.record(std::move(out), {x}, [x, begin, per](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    g.grad(x).vec().segment(begin * per, go.size()) += go;
  });
}

template <typename S>
Var reshape(Graph<S> &g, Var x, Shape shape)
{
  Tensor<S> out = g.value(x).reshaped(std::move(shape));
  return g.record(std::move(out), {x}, [x](Graph<S> &g, Var o) { g.grad(x).vec() += g.grad(o).vec(); });
}

template <typename S>
Var conv2d(Graph<S> &g, Var x, Var w, Var b, Index stride, Index pad)
{
  auto const &X = g.value(x);
  auto const &W = g.value(w);
  auto const &B = g.value(b);
  if (X.rank() != 4 || W.rank() != 4) {
    throw Error("conv2d: expected x [Ci,T,X,Y] and w [Co,Ci,kh,kw]");
  }
  if (W.dim(1) != X.dim(0)) {
    throw Error("conv2d: channel mismatch, input has " + std::to_string(X.dim(0)) + " channels, kernel expects " +
                std::to_string(W.dim(1)));
  }
  if (B.size() != W.dim(0)) {
    throw Error("conv2d: bias length must equal output channels");
  }
  if (stride < 1 || pad < 0) {
    throw Error("conv2d: invalid stride/padding");
  }
  ConvGeometry c{X.dim(0), X.dim(1), X.dim(2), X.dim(3), W.dim(2), W.dim(3), stride, pad, 0, 0};
  if (c.nx + 2 * pad < c.kh || c.ny + 2 * pad < c.kw) {
    throw Error("conv2d: kernel larger than padded input");
  }
  c.ox = (c.nx + 2 * pad - c.kh) / stride + 1;
  c.oy = (c.ny + 2 * pad - c.kw) / stride + 1;
  Index const co = W.dim(0);
  bool const pointwise = c.kh == 1 && c.kw == 1 && stride == 1 && pad == 0;

  Tensor<S> out({co, c.nt, c.ox, c.oy});
  MapRM<S> O(out.data(), co, c.cols());
  CMapRM<S> Wm(W.data(), co, c.rows());
  if (pointwise) {
    O.noalias() = Wm * CMapRM<S>(X.data(), c.rows(), c.cols());
  } else {
    // frame chunks keep the column buffer cache-sized
    Index const tc = frames_per_chunk(c);
    Index const per = c.ox * c.oy;
    RowMat<S> cols(c.rows(), tc * per);
    for (Index t0 = 0; t0 < c.nt; t0 += tc) {
      Index const n = std::min(tc, c.nt - t0);
      im2col(X.data(), c, t0, n, cols.data());
      O.middleCols(t0 * per, n * per).noalias() = Wm * CMapRM<S>(cols.data(), c.rows(), n * per);
    }
  }
  O.colwise() += B.vec();

  return g.record(std::move(out), {x, w, b}, [x, w, b, c, co, pointwise](Graph<S> &g, Var o) {
    CMapRM<S> gO(g.grad(o).data(), co, c.cols());
    if (g.requires_grad(b)) {
      g.grad(b).vec() += gO.rowwise().sum();
    }
    CMapRM<S> Wm(g.value(w).data(), co, c.rows());
    bool const need_w = g.requires_grad(w), need_x = g.requires_grad(x);
    if (pointwise) {
      if (need_w) {
        MapRM<S>(g.grad(w).data(), co, c.rows()).noalias() +=
          gO * CMapRM<S>(g.value(x).data(), c.rows(), c.cols()).transpose();
      }
      if (need_x) {
        MapRM<S>(g.grad(x).data(), c.rows(), c.cols()).noalias() += Wm.transpose() * gO;
      }
      return;
    }
    Index const tc = frames_per_chunk(c);
    Index const per = c.ox * c.oy;
    RowMat<S> cols(c.rows(), tc * per);
    for (Index t0 = 0; t0 < c.nt; t0 += tc) {
      Index const n = std::min(tc, c.nt - t0);
      auto const gOc = gO.middleCols(t0 * per, n * per);
      if (need_w) {
        im2col(g.value(x).data(), c, t0, n, cols.data());
        MapRM<S>(g.grad(w).data(), co, c.rows()).noalias() += gOc * CMapRM<S>(cols.data(), c.rows(), n * per).transpose();
      }
      if (need_x) {
        MapRM<S>(cols.data(), c.rows(), n * per).noalias() = Wm.transpose() * gOc;
        col2im(cols.data(), c, t0, n, g.grad(x).data());
      }
    }
  });
}

template <typename S>
Var conv1d_t(Graph<S> &g, Var x, Var w, Var b)
{
  auto const &X = g.value(x);
  auto const &W = g.value(w);
  auto const &B = g.value(b);
  if (X.rank() != 4 || W.rank() != 3) {
    throw Error("conv1d_t: expected x [Ci,T,X,Y] and w [Co,Ci,k]");
  }
  Index const ci = X.dim(0), nt = X.dim(1), plane = X.dim(2) * X.dim(3);
  Index const co = W.dim(0), k = W.dim(2);
  if (W.dim(1) != ci) {
    throw Error("conv1d_t: channel mismatch");
  }
  if (k > 2 * nt) {
    throw Error("conv1d_t: kernel longer than twice the number of frames");
  }
  if (B.size() != co) {
    throw Error("conv1d_t: bias length must equal output channels");
  }
  Index const half = k / 2;
  auto tap = [ci, co, k](Tensor<S> const &W, Index j) {
    RowMat<S> m(co, ci);
    for (Index o = 0; o < co; o++) {
      for (Index i = 0; i < ci; i++) {
        m(o, i) = W.data()[(o * ci + i) * k + j];
      }
    }
    return m;
  };

  Tensor<S> out({co, nt, X.dim(2), X.dim(3)});
  for (Index j = 0; j < k; j++) {
    RowMat<S> const Wj = tap(W, j);
    for (Index t = 0; t < nt; t++) {
      Index const src = mod(t + j - half, nt);
      StridedRM<S> O(out.data() + t * plane, co, plane, Eigen::OuterStride<>(nt * plane));
      CStridedRM<S> I(X.data() + src * plane, ci, plane, Eigen::OuterStride<>(nt * plane));
      O.noalias() += Wj * I;
    }
  }
  for (Index o = 0; o < co; o++) {
    out.vec().segment(o * nt * plane, nt * plane).array() += B[o];
  }

  return g.record(std::move(out), {x, w, b}, [x, w, b, ci, co, k, nt, plane, half, tap](Graph<S> &g, Var o) {
    auto const &gO = g.grad(o);
    if (g.requires_grad(b)) {
      for (Index c = 0; c < co; c++) {
        g.grad(b)[c] += gO.vec().segment(c * nt * plane, nt * plane).sum();
      }
    }
    bool const need_w = g.requires_grad(w);
    bool const need_x = g.requires_grad(x);
    for (Index j = 0; j < k; j++) {
      RowMat<S> gWj = RowMat<S>::Zero(co, ci);
      RowMat<S> const Wj = tap(g.value(w), j);
      for (Index t = 0; t < nt; t++) {
        Index const src = mod(t + j - half, nt);
        CStridedRM<S> G(gO.data() + t * plane, co, plane, Eigen::OuterStride<>(nt * plane));
        if (need_w) {
          CStridedRM<S> I(g.value(x).data() + src * plane, ci, plane, Eigen::OuterStride<>(nt * plane));
          gWj.noalias() += G * I.transpose();
        }
        if (need_x) {
          StridedRM<S> gI(g.grad(x).data() + src * plane, ci, plane, Eigen::OuterStride<>(nt * plane));
          gI.noalias() += Wj.transpose() * G;
        }
      }
      if (need_w) {
        auto &gw = g.grad(w);
        for (Index oc = 0; oc < co; oc++) {
          for (Index i = 0; i < ci; i++) {
            gw.data()[(oc * ci + i) * k + j] += gWj(oc, i);
          }
        }
      }
    }
  });
}

template <typename S>
Var downsample2x(Graph<S> &g, Var x)
{
  auto const &X = g.value(x);
  if (X.rank() < 2) {
    throw Error("downsample2x: need two spatial axes");
  }
  Index const nx = X.dim(-2), ny = X.dim(-1);
  if (nx % 2 || ny % 2) {
    throw Error("downsample2x: spatial extents must be even, got " + ShapeString(X.shape()));
  }
  Index const planes = X.size() / (nx * ny);
  Shape shape = X.shape();
  shape[shape.size() - 2] = nx / 2;
  shape[shape.size() - 1] = ny / 2;
  Tensor<S> out(shape);
  for (Index p = 0; p < planes; p++) {
    S const *src = X.data() + p * nx * ny;
    S *dst = out.data() + p * (nx / 2) * (ny / 2);
    for (Index i = 0; i < nx / 2; i++) {
      for (Index j = 0; j < ny / 2; j++) {
        dst[i * (ny / 2) + j] = S(0.25) * (src[(2 * i) * ny + 2 * j] + src[(2 * i) * ny + 2 * j + 1] +
                                           src[(2 * i + 1) * ny + 2 * j] + src[(2 * i + 1) * ny + 2 * j + 1]);
      }
    }
  }
  return g.record(std::move(out), {x}, [x, nx, ny, planes](Graph<S> &g, Var o) {
    auto const &go = g.grad(o);
    auto &gx = g.grad(x);
    for (Index p = 0; p < planes; p++) {
      S const *src = go.data() + p * (nx / 2) * (ny / 2);
      S *dst = gx.data() + p * nx * ny;
      for (Index i = 0; i < nx; i++) {
        for (Index j = 0; j < ny; j++) {
          dst[i * ny + j] += S(0.25) * src[(i / 2) * (ny / 2) + j / 2];
        }
      }
    }
  });
}

template <typename S>
Var upsample2x(Graph<S> &g, Var x)
{
  auto const &X = g.value(x);
  if (X.rank() < 2) {
    throw Error("upsample2x: need two spatial axes");
  }
  Index const nx = X.dim(-2), ny = X.dim(-1);
  Index const planes = X.size() / (nx * ny);
  Shape shape = X.shape();
  shape[shape.size() - 2] = 2 * nx;
  shape[shape.size() - 1] = 2 * ny;
  Tensor<S> out(shape);
  for (Index p = 0; p < planes; p++) {
    S const *src = X.data() + p * nx * ny;
    S *dst = out.data() + p * 4 * nx * ny;
    for (Index i = 0; i < nx; i++) {
      S *row = dst + 2 * i * 2 * ny;
      for (Index j = 0; j < ny; j++) {
        row[2 * j] = row[2 * j + 1] = src[i * ny + j];
      }
      std::copy_n(row, 2 * ny, row + 2 * ny);
    }
  }
  return g.record(std::move(out), {x}, [x, nx, ny, planes](Graph<S> &g, Var o) {
    auto const &go = g.grad(o);
    auto &gx = g.grad(x);
    for (Index p = 0; p < planes; p++) {
      S const *src = go.data() + p * 4 * nx * ny;
      S *dst = gx.data() + p * nx * ny;
      for (Index i = 0; i < nx; i++) {
        S const *r0 = src + 2 * i * 2 * ny;
        S const *r1 = r0 + 2 * ny;
        for (Index j = 0; j < ny; j++) {
          dst[i * ny + j] += (r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1]);
        }
      }
    }
  });
}

template <typename S>
Var circ_shift2d(Graph<S> &g, Var x, Index dx, Index dy)
{
  auto const &X = g.value(x);
  Index const r = X.rank();
  Tensor<S> out = circ_shift(circ_shift(X, r - 2, dx), r - 1, dy);
  return g.record(std::move(out), {x}, [x, dx, dy, r](Graph<S> &g, Var o) {
    g.grad(x).vec() += circ_shift(circ_shift(g.grad(o), r - 2, -dx), r - 1, -dy).vec();
  });
}

template <typename S>
Var matvec(Graph<S> &g, Var w, Var v)
{
  auto const &W = g.value(w);
  auto const &V = g.value(v);
  if (W.rank() != 2 || W.dim(1) != V.size()) {
    throw Error("matvec: embedding length " + std::to_string(V.size()) + " does not match projection " +
                ShapeString(W.shape()));
  }
  Index const rows = W.dim(0), cols = W.dim(1);
  Tensor<S> out({rows});
  out.vec().noalias() = CMapRM<S>(W.data(), rows, cols) * V.vec();
  return g.record(std::move(out), {w, v}, [w, v, rows, cols](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    if (g.requires_grad(w)) {
      MapRM<S>(g.grad(w).data(), rows, cols).noalias() += go * g.value(v).vec().transpose();
    }
    if (g.requires_grad(v)) {
      g.grad(v).vec().noalias() += CMapRM<S>(g.value(w).data(), rows, cols).transpose() * go;
    }
  });
}

template <typename S>
Var softmax(Graph<S> &g, Var v)
{
  auto const &V = g.value(v).vec();
  Tensor<S> out(g.value(v).shape());
  out.vec() = (V.array() - V.maxCoeff()).exp();
  out.vec() /= out.vec().sum();
  return g.record(std::move(out), {v}, [v](Graph<S> &g, Var o) {
    auto const &y = g.value(o).vec();
    auto const &go = g.grad(o).vec();
    S const inner = y.dot(go);
    g.grad(v).array() += y.array() * (go.array() - inner);
  });
}

template <typename S>
Var weighted_sum(Graph<S> &g, Var bank, Var weights)
{
  auto const &Bk = g.value(bank);
  auto const &Wt = g.value(weights);
  if (Bk.dim(0) != Wt.size()) {
    throw Error("weighted_sum: bank has " + std::to_string(Bk.dim(0)) + " entries, weights " +
                std::to_string(Wt.size()));
  }
  Index const k = Bk.dim(0), per = Bk.size() / k;
  Shape shape(Bk.shape().begin() + 1, Bk.shape().end());
  Tensor<S> out(shape);
  out.vec().noalias() = CMapRM<S>(Bk.data(), k, per).transpose() * Wt.vec();
  return g.record(std::move(out), {bank, weights}, [bank, weights, k, per](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    if (g.requires_grad(bank)) {
      MapRM<S>(g.grad(bank).data(), k, per).noalias() += g.value(weights).vec() * go.transpose();
    }
    if (g.requires_grad(weights)) {
      g.grad(weights).vec().noalias() += CMapRM<S>(g.value(bank).data(), k, per) * go;
    }
  });
}

namespace {

struct Lerp
{
  Index i0, i1;
  double f;
};

std::vector<Lerp> lerp_table(Index in, Index out)
{
  std::vector<Lerp> t(out);
  for (Index i = 0; i < out; i++) {
    double s = (i + 0.5) * static_cast<double>(in) / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    Index const i0 = static_cast<Index>(std::floor(s));
    t[i] = {i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return t;
}

} // namespace

template <typename S>
Var resize_bilinear(Graph<S> &g, Var p, Index nx, Index ny)
{
  auto const &P = g.value(p);
  if (P.rank() != 3) {
    throw Error("resize_bilinear: expected [C, h, w]");
  }
  Index const ch = P.dim(0), h = P.dim(1), w = P.dim(2);
  auto const tx = lerp_table(h, nx);
  auto const ty = lerp_table(w, ny);
  Tensor<S> out({ch, nx, ny});
  for (Index c = 0; c < ch; c++) {
    for (Index i = 0; i < nx; i++) {
      for (Index j = 0; j < ny; j++) {
        auto const &a = tx[i];
        auto const &b = ty[j];
        double const v = (1 - a.f) * ((1 - b.f) * P(c, a.i0, b.i0) + b.f * P(c, a.i0, b.i1)) +
                         a.f * ((1 - b.f) * P(c, a.i1, b.i0) + b.f * P(c, a.i1, b.i1));
        out(c, i, j) = static_cast<S>(v);
      }
    }
  }
  return g.record(std::move(out), {p}, [p, ch, nx, ny, tx, ty](Graph<S> &g, Var o) {
    auto const &go = g.grad(o);
    auto &gp = g.grad(p);
    for (Index c = 0; c < ch; c++) {
      for (Index i = 0; i < nx; i++) {
        for (Index j = 0; j < ny; j++) {
          auto const &a = tx[i];
          auto const &b = ty[j];
          S const v = go(c, i, j);
          gp(c, a.i0, b.i0) += static_cast<S>((1 - a.f) * (1 - b.f)) * v;
          gp(c, a.i0, b.i1) += static_cast<S>((1 - a.f) * b.f) * v;
          gp(c, a.i1, b.i0) += static_cast<S>(a.f * (1 - b.f)) * v;
          gp(c, a.i1, b.i1) += static_cast<S>(a.f * b.f) * v;
        }
      }
    }
  });
}

template <typename S>
Var broadcast_t(Graph<S> &g, Var p, Index nt)
{
  auto const &P = g.value(p);
  if (P.rank() != 3) {
    throw Error("broadcast_t: expected [C, X, Y]");
  }
  Index const ch = P.dim(0), plane = P.dim(1) * P.dim(2);
  Tensor<S> out({ch, nt, P.dim(1), P.dim(2)});
  for (Index c = 0; c < ch; c++) {
    for (Index t = 0; t < nt; t++) {
      out.vec().segment((c * nt + t) * plane, plane) = P.vec().segment(c * plane, plane);
    }
  }
  return g.record(std::move(out), {p}, [p, ch, nt, plane](Graph<S> &g, Var o) {
    auto const &go = g.grad(o).vec();
    auto &gp = g.grad(p).vec();
    for (Index c = 0; c < ch; c++) {
      for (Index t = 0; t < nt; t++) {
        gp.segment(c * plane, plane) += go.segment((c * nt + t) * plane, plane);
      }
    }
  });
}

template <typename S>
Var table_row(Graph<S> &g, Var table, Index row)
{
  auto const &Tb = g.value(table);
  if (Tb.rank() != 2 || row < 0 || row >= Tb.dim(0)) {
    throw Error("table_row: row " + std::to_string(row) + " out of range for " + ShapeString(Tb.shape()));
  }
  Index const d = Tb.dim(1);
  Tensor<S> out({d}, Tb.vec().segment(row * d, d));
  return g.record(std::move(out), {table}, [table, row, d](Graph<S> &g, Var o) {
    g.grad(table).vec().segment(row * d, d) += g.grad(o).vec();
  });
}

template <typename S>
Var complex_abs(Graph<S> &g, Var x, S eps)
{
  auto const &X = g.value(x);
  if (X.rank() < 2 || X.dim(0) != 2) {
    throw Error("complex_abs: expected two-channel input");
  }
  Index const n = X.size() / 2;
  Shape shape(X.shape().begin() + 1, X.shape().end());
  Tensor<S> out(shape);
  out.array() = (X.vec().head(n).array().square() + X.vec().tail(n).array().square() + eps).sqrt();
  return g.record(std::move(out), {x}, [x, n](Graph<S> &g, Var o) {
    auto const ratio = (g.grad(o).array() / g.value(o).array()).eval();
    auto &gx = g.grad(x).vec();
    gx.head(n).array() += ratio * g.value(x).vec().head(n).array();
    gx.tail(n).array() += ratio * g.value(x).vec().tail(n).array();
  });
}

template <typename S>
Var gaussian_blur(Graph<S> &g, Var x, double sigma, Index radius)
{
  auto const &X = g.value(x);
  if (X.rank() < 2) {
    throw Error("gaussian_blur: need two spatial axes");
  }
  Index const nx = X.dim(-2), ny = X.dim(-1), planes = X.size() / (nx * ny);
  Tensor<S> out(X.shape());
  blur_planes(X.data(), out.data(), planes, nx, ny, sigma, radius, false);
  return g.record(std::move(out), {x}, [x, nx, ny, planes, sigma, radius](Graph<S> &g, Var o) {
    Tensor<S> tmp(g.value(o).shape());
    blur_planes(g.grad(o).data(), tmp.data(), planes, nx, ny, sigma, radius, true);
    g.grad(x).vec() += tmp.vec();
  });
}

#define UNROLLKIT_INSTANTIATE(S)                                                                         \
  template Var add(Graph<S> &, Var, Var);                                                                \
  template Var sub(Graph<S> &, Var, Var);                                                                \
  template Var mul(Graph<S> &, Var, Var);                                                                \
  template Var div(Graph<S> &, Var, Var);                                                                \
  template Var scale(Graph<S> &, Var, S);                                                                \
  template Var add_scalar(Graph<S> &, Var, S);                                                           \
  template Var square(Graph<S> &, Var);                                                                  \
  template Var exp(Graph<S> &, Var);                                                                     \
  template Var relu(Graph<S> &, Var);                                                                    \
  template Var sum(Graph<S> &, Var);                                                                     \
  template Var mean(Graph<S> &, Var);                                                                    \
  template Var concat_channels(Graph<S> &, std::vector<Var> const &);                                    \
  template Var slice_channels(Graph<S> &, Var, Index, Index);                                            \
  template Var reshape(Graph<S> &, Var, Shape);                                                          \
  template Var conv2d(Graph<S> &, Var, Var, Var, Index, Index);                                          \
  template Var conv1d_t(Graph<S> &, Var, Var, Var);                                                      \
  template Var downsample2x(Graph<S> &, Var);                                                            \
  template Var upsample2x(Graph<S> &, Var);                                                              \
  template Var circ_shift2d(Graph<S> &, Var, Index, Index);                                              \
  template Var matvec(Graph<S> &, Var, Var);                                                             \
  template Var softmax(Graph<S> &, Var);                                                                 \
  template Var weighted_sum(Graph<S> &, Var, Var);                                                       \
  template Var resize_bilinear(Graph<S> &, Var, Index, Index);                                           \
  template Var broadcast_t(Graph<S> &, Var, Index);                                                      \
  template Var table_row(Graph<S> &, Var, Index);                                                        \
  template Var complex_abs(Graph<S> &, Var, S);                                                          \
  template Var gaussian_blur(Graph<S> &, Var, double, Index);                                            \
  template void blur_planes(S const *, S *, Index, Index, Index, double, Index, bool);

UNROLLKIT_INSTANTIATE(float)
UNROLLKIT_INSTANTIATE(double)

} // namespace unrollkit::nn
