#pragma once

#include "autodiff.hpp"
#include "sampling.hpp"

#include <utility>
#include <vector>

namespace unrollkit {

using Shift = std::pair<Index, Index>; // (dx, dy)

/* [2, T, X, Y] -> [2 * (1 + n), T, X, Y]: the input followed by one circularly
 * shifted copy per entry of `shifts`.
 */
template <typename Real>
Tensor<Real> channel_shift_augment(Tensor<Real> const &x2ch, std::vector<Shift> const &shifts);

template <typename Real>
nn::Var channel_shift_augment(nn::Graph<Real> &g, nn::Var x2ch, std::vector<Shift> const &shifts);

/* Line masks are undersampled along ky only: quarter, half and three-quarter
 * FOV shifts in y. Radial masks are undersampled in both directions.
 */
std::vector<Shift> default_shifts(MaskKind kind, Index nx, Index ny);

void validate_shifts(std::vector<Shift> const &shifts);

} // namespace unrollkit
