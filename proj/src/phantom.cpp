#include "unrollkit/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace unrollkit {

namespace {

enum Label : std::uint8_t
{
  Background = 0,
  Body = 1,
  Myocardium = 2,
  Blood = 3,
  Fat = 4,
  Vessel = 5,
};

// Brightness per tissue label, one row per contrast class.
constexpr double kIntensity[4][6] = {
  {0.0, 0.35, 0.30, 0.95, 0.80, 0.90}, // cine
  {0.0, 0.50, 0.55, 0.25, 0.90, 0.30}, // aorta
  {0.0, 0.40, 0.60, 0.70, 0.50, 0.60}, // tagging
  {0.0, 0.30, 0.45, 0.60, 0.35, 0.70}, // mapping
};

struct Ellipse
{
  double cx, cy, a, b, angle;
  std::uint8_t label;
  bool pulsates = false;

  bool contains(double u, double v, double grow) const
  {
    double const c = std::cos(angle), s = std::sin(angle);
    double const du = u - cx, dv = v - cy;
    double const p = (c * du + s * dv) / (a + grow);
    double const q = (-s * du + c * dv) / (b + grow);
    return p * p + q * q <= 1.0;
  }
};

struct Geometry
{
  std::vector<Ellipse> ellipses; // painter's order
  double phase_a, phase_b, phase_c;
};

Geometry make_geometry(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Geometry g;
  g.ellipses.push_back({uni(-0.02, 0.02), uni(-0.02, 0.02), uni(0.38, 0.44), uni(0.32, 0.40), uni(-0.3, 0.3), Body});
  Index const extras = std::uniform_int_distribution<Index>(1, 5)(rng);
  for (Index i = 0; i < extras; i++) {
    double const r = uni(0.18, 0.30), th = uni(0.0, 2.0 * std::numbers::pi);
    double const size = uni(0.03, 0.07);
    g.ellipses.push_back({r * std::cos(th), r * std::sin(th), size, size * uni(0.6, 1.4), uni(0.0, std::numbers::pi),
                          static_cast<std::uint8_t>(i % 2 ? Vessel : Fat)});
  }
  double const hx = uni(-0.06, 0.06), hy = uni(-0.06, 0.06);
  double const ma = uni(0.15, 0.19), mb = uni(0.12, 0.16), ang = uni(0.0, std::numbers::pi);
  g.ellipses.push_back({hx, hy, ma, mb, ang, Myocardium});
  g.ellipses.push_back({hx, hy, 0.62 * ma, 0.62 * mb, ang, Blood, true});
  g.phase_a = uni(-0.5, 0.5) * std::numbers::pi;
  g.phase_b = uni(-0.5, 0.5) * std::numbers::pi;
  g.phase_c = uni(-1.0, 1.0);
  return g;
}

double wrap_phase(double phase, Index nt)
{
  double const p = std::fmod(phase, static_cast<double>(nt));
  return p < 0 ? p + nt : p;
}

} // namespace

void PhantomSpec::validate() const
{
  if (nx < 2 || ny < 2 || nx % 2 || ny % 2) {
    throw Error("phantom: extents must be even and >= 2");
  }
  if (nt < 4) {
    throw Error("phantom: need at least 4 frames");
  }
  if (contrast_id < 0 || contrast_id >= 4) {
    throw Error("phantom: contrast id must lie in [0, 4)");
  }
  if (motion_amplitude < 0 || motion_amplitude > 0.1) {
    throw Error("phantom: motion amplitude must lie in [0, 0.1]");
  }
}

std::string contrast_name(Index contrast_id)
{
  static char const *names[] = {"cine", "aorta", "tagging", "mapping"};
  return contrast_id >= 0 && contrast_id < 4 ? names[contrast_id] : "unknown";
}

Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phantom_labels(PhantomSpec const &spec,
                                                                                          double phase)
{
  spec.validate();
  auto const geo = make_geometry(spec.seed);
  double const p = wrap_phase(phase, spec.nt);
  double const grow = spec.motion_amplitude * std::cos(2.0 * std::numbers::pi * p / spec.nt);
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels =
    decltype(labels)::Zero(spec.nx, spec.ny);
  for (Index x = 0; x < spec.nx; x++) {
    for (Index y = 0; y < spec.ny; y++) {
      double const u = (x - spec.nx / 2) / static_cast<double>(spec.nx);
      double const v = (y - spec.ny / 2) / static_cast<double>(spec.ny);
      for (auto const &e : geo.ellipses) {
        if (e.contains(u, v, e.pulsates ? grow : 0.0)) {
          labels(x, y) = e.label;
        }
      }
    }
  }
  return labels;
}

ComplexTensor render_frame(PhantomSpec const &spec, double phase)
{
  auto const labels = phantom_labels(spec, phase);
  auto const geo = make_geometry(spec.seed);
  double const p = wrap_phase(phase, spec.nt);
  double const tag_depth = 0.8 * std::exp(-1.5 * p / spec.nt);
  double const wavelength = spec.nx / 8.0;

  ComplexTensor frame({spec.nx, spec.ny});
  for (Index x = 0; x < spec.nx; x++) {
    for (Index y = 0; y < spec.ny; y++) {
      double mag = kIntensity[spec.contrast_id][labels(x, y)];
      if (spec.contrast_id == 2) {
        double const tx = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * x / wavelength));
        double const ty = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * y / wavelength));
        mag *= 1.0 - tag_depth * (1.0 - tx * ty);
      }
      double const u = static_cast<double>(x) / spec.nx, v = static_cast<double>(y) / spec.ny;
      double const ph = geo.phase_a * (u - 0.5) + geo.phase_b * (v - 0.5) +
                        geo.phase_c * std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * v);
      frame(x, y) = std::polar(static_cast<float>(mag), static_cast<float>(ph));
    }
  }
  return frame;
}

ComplexTensor generate_phantom(PhantomSpec const &spec)
{
  spec.validate();
  ComplexTensor img({spec.nt, spec.nx, spec.ny});
  Index const plane = spec.nx * spec.ny;
  for (Index t = 0; t < spec.nt; t++) {
    img.vec().segment(t * plane, plane) = render_frame(spec, static_cast<double>(t)).vec();
  }
  return img;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ReconSample make_sample(DatasetSpec const &spec, MaskKind kind, Index rate, Index contrast, std::uint64_t seed)
{
  PhantomSpec ps{spec.nx, spec.ny, spec.nt, contrast, seed, spec.motion_amplitude};
  ReconSample s;
  s.seed = seed;
  s.contrast_id = contrast;
  s.target = generate_phantom(ps);
  s.sens = simulate_sensitivities(spec.nx, spec.ny, spec.ncoils, mix_seed(seed, 1));
  s.mask = make_mask(kind, spec.nx, spec.ny, rate, mix_seed(seed, 2));
  auto const full = forward(s.target, s.sens, full_grid(spec.nx, spec.ny));
  s.y = retrospective_undersample(full, s.mask.grid);
  return s;
}

std::vector<ReconSample> build_dataset(DatasetSpec const &spec)
{
  if (spec.kinds.empty() || spec.rates.empty() || spec.contrasts.empty() || spec.n_per_cell < 1) {
    throw Error("build_dataset: every factor list must be nonempty");
  }
  std::vector<ReconSample> out;
  for (auto const kind : spec.kinds) {
    for (auto const rate : spec.rates) {
      for (auto const contrast : spec.contrasts) {
        for (Index rep = 0; rep < spec.n_per_cell; rep++) {
          std::uint64_t cell = mix_seed(spec.seed, static_cast<std::uint64_t>(kind));
          cell = mix_seed(cell, static_cast<std::uint64_t>(rate));
          cell = mix_seed(cell, static_cast<std::uint64_t>(contrast));
          out.push_back(make_sample(spec, kind, rate, contrast, mix_seed(cell, static_cast<std::uint64_t>(rep))));
        }
      }
    }
  }
  return out;
}

} // namespace unrollkit
