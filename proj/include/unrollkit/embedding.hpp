#pragma once

#include "sampling.hpp"

#include <array>

namespace unrollkit {

/* Statistical fingerprint of a sampling mask.
 *
 * Layout (17 entries): index = half * 8 + axis * 4 + stat, then density at 16.
 *   half: 0 = kx < nx/2, 1 = kx >= nx/2
 *   axis: 0 = profile summed along kx (one bin per ky), 1 = summed along ky (one bin per kx)
 *   stat: 0 count mean, 1 count variance, 2 spacing mean, 3 spacing variance
 * Counts are divided by the number of cells summed into each bin, spacings by
 * the profile length. Variances are population variances. A profile with fewer
 * than two nonzero bins has zero spacing statistics.
 */
struct PatternEmbedding
{
  static constexpr Index kSize = 17;
  static constexpr Index kDensity = 16;

  Eigen::Matrix<double, kSize, 1> v = Eigen::Matrix<double, kSize, 1>::Zero();
  std::array<bool, 2> empty_half{false, false};

  static constexpr Index index(Index half, Index axis, Index stat) { return half * 8 + axis * 4 + stat; }
};

enum EmbeddingStat : Index
{
  kCountMean = 0,
  kCountVar = 1,
  kSpacingMean = 2,
  kSpacingVar = 3,
};

PatternEmbedding pattern_embedding(MaskGrid const &grid);
PatternEmbedding pattern_embedding(SamplingMask const &mask);

// Synthetic contrast classes produced by the phantom generator.
inline constexpr Index kNumContrasts = 4;
inline constexpr Index kContrastDim = 8;

/* Row lookup into a trainable [C, d_c] table. */
template <typename Real>
Eigen::Matrix<Real, Eigen::Dynamic, 1> contrast_embedding(Index contrast_id, Tensor<Real> const &table);

// Standard normal scaled by 0.02, fixed seed.
Tensor<float> init_contrast_table(Index contrasts, Index dim, std::uint64_t seed);

} // namespace unrollkit
