#pragma once

#include "tensor.hpp"

namespace unrollkit {

/* Centered, orthonormal 2D DFT over the last two axes, applied independently
 * for every leading index. DC sits at (nx/2, ny/2).
 */
template <typename Real>
CTensor<Real> fft2c(CTensor<Real> const &img);

template <typename Real>
CTensor<Real> ifft2c(CTensor<Real> const &ksp);

namespace fft {

// Uncentered, unnormalized in-place transform of one nx*ny row-major plane.
template <typename Real>
void forward_plane(std::complex<Real> *plane, Index nx, Index ny);
template <typename Real>
void inverse_plane(std::complex<Real> *plane, Index nx, Index ny);

// `count` consecutive planes at once.
template <typename Real>
void forward_planes(std::complex<Real> *data, Index count, Index nx, Index ny);
template <typename Real>
void inverse_planes(std::complex<Real> *data, Index count, Index nx, Index ny);

// 1D transforms along the contiguous axis of `rows` consecutive rows of length n.
template <typename Real>
void forward_rows(std::complex<Real> *data, Index rows, Index n);
template <typename Real>
void inverse_rows(std::complex<Real> *data, Index rows, Index n);

// fftshift moves index i to (i + n/2) mod n on both axes; ifftshift undoes it.
template <typename Real>
void fftshift_plane(std::complex<Real> const *in, std::complex<Real> *out, Index nx, Index ny);
template <typename Real>
void ifftshift_plane(std::complex<Real> const *in, std::complex<Real> *out, Index nx, Index ny);

} // namespace fft

} // namespace unrollkit
