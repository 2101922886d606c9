#pragma once

#include "tensor.hpp"

#include <optional>
#include <string>

namespace unrollkit {

enum class MaskKind
{
  Uniform,
  GaussianRandom,
  PseudoRadial
};

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string const &name);

// Binary nx*ny grid, row-major, indexed (kx, ky). A sampled ky line is a full column.
using MaskGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SamplingMask
{
  MaskKind kind = MaskKind::Uniform;
  Index nominal_rate = 1;
  MaskGrid grid;
  Index acs_lines = 0;
  std::uint64_t seed = 0;

  Index nx() const { return grid.rows(); }
  Index ny() const { return grid.cols(); }
  Index count() const;
};

// The acceleration rates swept by the datasets, benchmarks and CLI.
inline constexpr Index kStandardRates[] = {4, 8, 12, 16, 20, 24};

/* Default calibration size: max(8, ny/16) lines, capped at half of the
 * round(ny/rate) line budget so that high rates stay near their nominal value.
 */
Index default_acs_lines(Index ny, Index rate);

SamplingMask make_uniform_mask(Index nx, Index ny, Index rate, Index acs_lines, Index offset);
SamplingMask make_gaussian_mask(Index nx, Index ny, Index rate, Index acs_lines, std::uint64_t seed);
SamplingMask make_pseudo_radial_mask(Index nx, Index ny, Index rate, std::uint64_t seed);

// Family dispatch with default ACS; uniform masks take offset = seed mod rate.
SamplingMask make_mask(MaskKind kind, Index nx, Index ny, Index rate, std::uint64_t seed);

// Marks every cell crossed by full-diameter lines through (nx/2, ny/2) at the given angles.
MaskGrid rasterize_spokes(Index nx, Index ny, std::vector<double> const &angles);

Index spoke_count(Index nx, Index ny, Index rate);

double achieved_rate(MaskGrid const &grid);
double achieved_rate(SamplingMask const &mask);

// True when every sampled ky line is sampled across all of kx.
bool is_line_mask(MaskGrid const &grid);

MaskGrid full_grid(Index nx, Index ny);

} // namespace unrollkit
