#pragma once

#include "forward_model.hpp"
#include "sampling.hpp"

namespace unrollkit {

struct PhantomSpec
{
  Index nx = 64, ny = 64, nt = 8;
  Index contrast_id = 0; // 0 cine, 1 aorta, 2 tagging, 3 mapping
  std::uint64_t seed = 0;
  double motion_amplitude = 0.04; // ventricle wall excursion, fraction of FOV

  void validate() const;
};

std::string contrast_name(Index contrast_id);

/* Dynamic ellipse phantom [t, x, y], |value| <= 1. */
ComplexTensor generate_phantom(PhantomSpec const &spec);

// One frame at a (possibly fractional) cardiac phase; phases are periodic in nt.
ComplexTensor render_frame(PhantomSpec const &spec, double phase);

// Tissue label per pixel at the given phase (0 = background).
Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phantom_labels(PhantomSpec const &spec,
                                                                                          double phase);

struct ReconSample
{
  ComplexTensor y;      // [coil, t, x, y], zero where not sampled
  SamplingMask mask;
  CoilSensitivities<float> sens;
  ComplexTensor target; // [t, x, y]
  Index contrast_id = 0;
  std::uint64_t seed = 0;
};

struct DatasetSpec
{
  Index nx = 64, ny = 64, nt = 8, ncoils = 4;
  Index n_per_cell = 1;
  std::vector<Index> rates{4, 8, 12, 16, 20, 24};
  std::vector<MaskKind> kinds{MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial};
  std::vector<Index> contrasts{0, 1, 2, 3};
  std::uint64_t seed = 0;
  double motion_amplitude = 0.04;
};

// Cartesian product kinds x rates x contrasts x n_per_cell, in that nesting order.
std::vector<ReconSample> build_dataset(DatasetSpec const &spec);

ReconSample make_sample(DatasetSpec const &spec, MaskKind kind, Index rate, Index contrast, std::uint64_t seed);

// Deterministic 64-bit mixing used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

} // namespace unrollkit
