#include "unrollkit/embedding.hpp"

#include <random>

namespace unrollkit {

namespace {

struct ProfileStats
{
  double count_mean = 0, count_var = 0, spacing_mean = 0, spacing_var = 0;
  bool empty = true;
};

// Spacings are measured in whole bins and scaled by the full axis extent, so
// evenly spaced profiles give an exactly zero variance.
ProfileStats profile_stats(Eigen::ArrayXd const &profile, double cells_per_bin, Index extent)
{
  ProfileStats s;
  Index const n = profile.size();
  Eigen::ArrayXd const counts = profile / cells_per_bin;
  s.count_mean = counts.mean();
  s.count_var = (counts - s.count_mean).square().mean();

  std::vector<Index> nonzero;
  for (Index i = 0; i < n; i++) {
    if (profile[i] > 0) {
      nonzero.push_back(i);
    }
  }
  s.empty = nonzero.empty();
  if (nonzero.size() >= 2) {
    Index const k = static_cast<Index>(nonzero.size()) - 1;
    Index sum = 0, sum_sq = 0;
    for (Index i = 1; i <= k; i++) {
      Index const gap = nonzero[i] - nonzero[i - 1];
      sum += gap;
      sum_sq += gap * gap;
    }
    double const e = static_cast<double>(extent);
    s.spacing_mean = static_cast<double>(sum) / static_cast<double>(k) / e;
    s.spacing_var = static_cast<double>(k * sum_sq - sum * sum) / static_cast<double>(k * k) / (e * e);
  }
  return s;
}

} // namespace

PatternEmbedding pattern_embedding(MaskGrid const &grid)
{
  Index const nx = grid.rows();
  Index const ny = grid.cols();
  if (nx < 1 || ny < 1 || (grid != 0).count() == 0) {
    throw Error("pattern_embedding: mask is empty");
  }
  Eigen::ArrayXXd const g = grid.cast<double>();
  Index const half_rows[2] = {nx / 2, nx - nx / 2};
  Index const half_start[2] = {0, nx / 2};

  PatternEmbedding e;
  for (Index h = 0; h < 2; h++) {
    if (half_rows[h] == 0) {
      e.empty_half[h] = true;
      continue;
    }
    auto const block = g.middleRows(half_start[h], half_rows[h]);
    Eigen::ArrayXd const along_kx = block.colwise().sum().transpose(); // one bin per ky
    Eigen::ArrayXd const along_ky = block.rowwise().sum();             // one bin per kx
    ProfileStats const stats[2] = {profile_stats(along_kx, static_cast<double>(half_rows[h]), ny),
                                   profile_stats(along_ky, static_cast<double>(ny), nx)};
    for (Index a = 0; a < 2; a++) {
      e.v[PatternEmbedding::index(h, a, kCountMean)] = stats[a].count_mean;
      e.v[PatternEmbedding::index(h, a, kCountVar)] = stats[a].count_var;
      e.v[PatternEmbedding::index(h, a, kSpacingMean)] = stats[a].spacing_mean;
      e.v[PatternEmbedding::index(h, a, kSpacingVar)] = stats[a].spacing_var;
    }
    e.empty_half[h] = stats[0].empty;
  }
  e.v[PatternEmbedding::kDensity] = g.sum() / static_cast<double>(g.size());
  return e;
}

PatternEmbedding pattern_embedding(SamplingMask const &mask)
{
  return pattern_embedding(mask.grid);
}

template <typename Real>
Eigen::Matrix<Real, Eigen::Dynamic, 1> contrast_embedding(Index contrast_id, Tensor<Real> const &table)
{
  if (table.rank() != 2) {
    throw Error("contrast table must be [C, d_c]");
  }
  if (contrast_id < 0 || contrast_id >= table.dim(0)) {
    throw Error("contrast id " + std::to_string(contrast_id) + " out of range [0, " + std::to_string(table.dim(0)) +
                ")");
  }
  Index const d = table.dim(1);
  return table.vec().segment(contrast_id * d, d);
}

Tensor<float> init_contrast_table(Index contrasts, Index dim, std::uint64_t seed)
{
  Tensor<float> t({contrasts, dim});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < t.size(); i++) {
    t[i] = static_cast<float>(0.02 * normal(rng));
  }
  return t;
}

template Eigen::Matrix<float, Eigen::Dynamic, 1> contrast_embedding(Index, Tensor<float> const &);
template Eigen::Matrix<double, Eigen::Dynamic, 1> contrast_embedding(Index, Tensor<double> const &);

} // namespace unrollkit
