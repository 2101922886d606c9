#include "unrollkit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace unrollkit {

std::string to_string(MaskKind kind)
{
  switch (kind) {
  case MaskKind::Uniform: return "uniform";
  case MaskKind::GaussianRandom: return "gaussian";
  case MaskKind::PseudoRadial: return "radial";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string const &name)
{
  if (name == "uniform") {
    return MaskKind::Uniform;
  }
  if (name == "gaussian" || name == "random") {
    return MaskKind::GaussianRandom;
  }
  if (name == "radial" || name == "pseudo-radial") {
    return MaskKind::PseudoRadial;
  }
  throw Error("unknown mask kind '" + name + "' (expected uniform, gaussian or radial)");
}

Index SamplingMask::count() const
{
  return grid.cast<Index>().sum();
}

namespace {

void check_extents(Index nx, Index ny, Index rate)
{
  if (nx < 1 || ny < 1) {
    throw Error("mask extents must be >= 1");
  }
  if (rate < 1) {
    throw Error("acceleration rate must be >= 1");
  }
}

Index line_budget(Index ny, Index rate)
{
  return std::max<Index>(1, std::lround(static_cast<double>(ny) / rate));
}

void mark_acs(MaskGrid &grid, Index acs_lines)
{
  Index const ny = grid.cols();
  Index const first = ny / 2 - acs_lines / 2;
  for (Index j = first; j < first + acs_lines; j++) {
    grid.col(j).setOnes();
  }
}

} // namespace

Index default_acs_lines(Index ny, Index rate)
{
  Index const preferred = std::max<Index>(8, ny / 16);
  return std::min(preferred, line_budget(ny, std::max<Index>(rate, 1)) / 2);
}

SamplingMask make_uniform_mask(Index nx, Index ny, Index rate, Index acs_lines, Index offset)
{
  check_extents(nx, ny, rate);
  if (acs_lines < 0 || acs_lines >= ny) {
    throw Error("uniform mask: acs_lines must lie in [0, ny)");
  }
  if (offset < 0 || offset >= std::min(rate, ny)) {
    throw Error("uniform mask: offset must lie in [0, min(rate, ny))");
  }
  SamplingMask m;
  m.kind = MaskKind::Uniform;
  m.nominal_rate = rate;
  m.acs_lines = acs_lines;
  m.seed = static_cast<std::uint64_t>(offset);
  m.grid = MaskGrid::Zero(nx, ny);
  for (Index j = offset; j < ny; j += rate) {
    m.grid.col(j).setOnes();
  }
  mark_acs(m.grid, acs_lines);
  return m;
}

SamplingMask make_gaussian_mask(Index nx, Index ny, Index rate, Index acs_lines, std::uint64_t seed)
{
  check_extents(nx, ny, rate);
  if (acs_lines < 0 || acs_lines >= ny) {
    throw Error("gaussian mask: acs_lines must lie in [0, ny)");
  }
  Index const lines = line_budget(ny, rate);
  if (lines < acs_lines) {
    throw Error("gaussian mask: requested " + std::to_string(lines) + " lines but " + std::to_string(acs_lines) +
                " calibration lines");
  }
  SamplingMask m;
  m.kind = MaskKind::GaussianRandom;
  m.nominal_rate = rate;
  m.acs_lines = acs_lines;
  m.seed = seed;
  m.grid = MaskGrid::Zero(nx, ny);
  mark_acs(m.grid, acs_lines);

  double const sigma = ny / 6.0;
  double const centre = ny / 2;
  std::vector<double> weight(ny);
  for (Index j = 0; j < ny; j++) {
    double const d = (j - centre) / sigma;
    weight[j] = m.grid(0, j) ? 0.0 : std::exp(-0.5 * d * d);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Index const lines_with_acs = m.grid.row(0).cast<Index>().sum();
  for (Index drawn = lines_with_acs; drawn < lines; drawn++) {
    double const total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double u = uniform(rng) * total;
    Index pick = -1;
    for (Index j = 0; j < ny; j++) {
      if (weight[j] <= 0.0) {
        continue;
      }
      pick = j;
      if (u < weight[j]) {
        break;
      }
      u -= weight[j];
    }
    m.grid.col(pick).setOnes();
    weight[pick] = 0.0;
  }
  return m;
}

Index spoke_count(Index nx, Index ny, Index rate)
{
  return std::lround(std::max(nx, ny) * std::numbers::pi / (2.0 * rate));
}

// Each spoke is a full line through the DC sample, stepped one cell at a time
// along its dominant axis so a spoke marks one cell per row or column.
MaskGrid rasterize_spokes(Index nx, Index ny, std::vector<double> const &angles)
{
  MaskGrid grid = MaskGrid::Zero(nx, ny);
  double const cx = static_cast<double>(nx / 2);
  double const cy = static_cast<double>(ny / 2);
  for (double const theta : angles) {
    double const c = std::cos(theta);
    double const s = std::sin(theta);
    if (std::abs(c) >= std::abs(s)) {
      for (Index x = 0; x < nx; x++) {
        Index const y = static_cast<Index>(std::floor(cy + (x - cx) * s / c + 0.5));
        if (y >= 0 && y < ny) {
          grid(x, y) = 1;
        }
      }
    } else {
      for (Index y = 0; y < ny; y++) {
        Index const x = static_cast<Index>(std::floor(cx + (y - cy) * c / s + 0.5));
        if (x >= 0 && x < nx) {
          grid(x, y) = 1;
        }
      }
    }
  }
  return grid;
}

SamplingMask make_pseudo_radial_mask(Index nx, Index ny, Index rate, std::uint64_t seed)
{
  check_extents(nx, ny, rate);
  if (rate < 2) {
    throw Error("pseudo-radial mask: rate must be >= 2");
  }
  Index const spokes = spoke_count(nx, ny, rate);
  if (spokes < 1) {
    throw Error("pseudo-radial mask: fewer than one spoke at this rate and size");
  }
  std::mt19937_64 rng(seed);
  double const jitter = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::vector<double> angles(spokes);
  for (Index i = 0; i < spokes; i++) {
    angles[i] = (i + jitter) * std::numbers::pi / spokes;
  }
  SamplingMask m;
  m.kind = MaskKind::PseudoRadial;
  m.nominal_rate = rate;
  m.acs_lines = 0;
  m.seed = seed;
  m.grid = rasterize_spokes(nx, ny, angles);
  return m;
}

SamplingMask make_mask(MaskKind kind, Index nx, Index ny, Index rate, std::uint64_t seed)
{
  switch (kind) {
  case MaskKind::Uniform:
    return make_uniform_mask(nx, ny, rate, default_acs_lines(ny, rate),
                             static_cast<Index>(seed % static_cast<std::uint64_t>(std::min(rate, ny))));
  case MaskKind::GaussianRandom:
    return make_gaussian_mask(nx, ny, rate, default_acs_lines(ny, rate), seed);
  case MaskKind::PseudoRadial:
    return make_pseudo_radial_mask(nx, ny, rate, seed);
  }
  throw Error("make_mask: invalid kind");
}

double achieved_rate(MaskGrid const &grid)
{
  auto const ones = grid.cast<Index>().sum();
  if (ones == 0) {
    throw Error("achieved_rate: mask has no sampled entries");
  }
  return static_cast<double>(grid.size()) / static_cast<double>(ones);
}

double achieved_rate(SamplingMask const &mask)
{
  return achieved_rate(mask.grid);
}

bool is_line_mask(MaskGrid const &grid)
{
  for (Index j = 0; j < grid.cols(); j++) {
    auto const c = grid.col(j).cast<Index>().sum();
    if (c != 0 && c != grid.rows()) {
      return false;
    }
  }
  return true;
}

MaskGrid full_grid(Index nx, Index ny)
{
  return MaskGrid::Ones(nx, ny);
}

} // namespace unrollkit
