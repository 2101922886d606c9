#include "dense_oracle.hpp"
#include "testutil.hpp"
#include "unrollkit/fft.hpp"

#include <doctest.h>

#include <set>

using namespace unrollkit;
using testutil::random_complex;
using testutil::rel_diff;

namespace {

double adjoint_mismatch(EncodingOperator<float> const &op, Shape img, Shape ksp, std::uint64_t seed)
{
  auto const x = random_complex(img, seed);
  auto const y = random_complex(ksp, seed + 1000);
  auto const lhs = inner(op.forward(x), y);
  auto const rhs = inner(x, op.adjoint(y));
  return std::abs(lhs - rhs) / (norm(x) * norm(y));
}

} // namespace

TEST_CASE("simulated sensitivities")
{
  auto const one = simulate_sensitivities(12, 10, 1, 3);
  for (Index i = 0; i < one.maps.size(); i++) {
    CHECK(std::abs(std::abs(one.maps[i]) - 1.0f) < 1e-6f);
  }
  for (Index nc : {2, 4, 8}) {
    auto const s = simulate_sensitivities(16, 12, nc, 9);
    CHECK(s.maps.shape() == Shape{nc, 16, 12});
    for (Index p = 0; p < 16 * 12; p++) {
      double ss = 0;
      for (Index c = 0; c < nc; c++) {
        ss += std::norm(s.maps[c * 16 * 12 + p]);
      }
      CHECK(std::abs(ss - 1.0) < 1e-5);
    }
    CHECK(simulate_sensitivities(16, 12, nc, 9).maps == s.maps);
  }
  CHECK_THROWS_AS(simulate_sensitivities(8, 8, 0, 1), Error);
}

TEST_CASE("degenerate operators")
{
  CoilSensitivities<float> unit{ComplexTensor::Constant({1, 8, 6}, 1.0f)};
  auto const full = full_grid(8, 6);
  auto const x = random_complex({3, 8, 6}, 1);
  auto const k = forward(x, unit, full);
  CHECK(k.shape() == Shape{1, 3, 8, 6});
  CHECK(rel_diff(k.reshaped({3, 8, 6}), fft2c(x)) < 1e-6);
  CHECK(rel_diff(adjoint(k, unit, full), x) < 1e-5);
  CHECK(rel_diff(normal(x, unit, full, 0.0f), x) < 1e-5);

  auto const y = random_complex({1, 3, 8, 6}, 2);
  CHECK(rel_diff(adjoint(y, unit, full), ifft2c(y.reshaped({3, 8, 6}))) < 1e-6);

  ComplexTensor zero({3, 8, 6});
  CHECK(norm(forward(zero, unit, full)) == 0.0);
  CHECK(norm(adjoint(ComplexTensor({1, 3, 8, 6}), unit, full)) == 0.0);
  CHECK(norm(normal(zero, unit, full, 0.5f)) == 0.0);
  CHECK_THROWS_AS(normal(x, unit, full, -1.0f), Error);
  CHECK_THROWS_AS(forward(random_complex({3, 6, 8}, 3), unit, full), Error);
}

TEST_CASE("full sampling with normalised coils recovers the image")
{
  auto const sens = simulate_sensitivities(16, 16, 4, 5);
  auto const x = random_complex({2, 16, 16}, 4);
  CHECK(rel_diff(adjoint(forward(x, sens, full_grid(16, 16)), sens, full_grid(16, 16)), x) < 1e-5);
}

TEST_CASE("unsampled k-space is exactly zero")
{
  auto const sens = simulate_sensitivities(16, 16, 2, 5);
  auto const m = make_mask(MaskKind::GaussianRandom, 16, 16, 4, 3);
  auto const k = forward(random_complex({2, 16, 16}, 6), sens, m.grid);
  for (Index c = 0; c < 2; c++) {
    for (Index t = 0; t < 2; t++) {
      for (Index kx = 0; kx < 16; kx++) {
        for (Index ky = 0; ky < 16; ky++) {
          if (!m.grid(kx, ky)) {
            CHECK(k(c, t, kx, ky) == std::complex<float>(0));
          }
        }
      }
    }
  }
}

TEST_CASE("adjointness for every mask family and coil count")
{
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    for (Index nc : {1, 2, 4, 8}) {
      auto const m = make_mask(kind, 16, 16, 4, 11);
      EncodingOperator<float> const op(simulate_sensitivities(16, 16, nc, 12), m.grid);
      for (std::uint64_t s = 0; s < 3; s++) {
        CHECK(adjoint_mismatch(op, {2, 16, 16}, {nc, 2, 16, 16}, 100 * nc + s) < 1e-5);
      }
    }
  }
}

TEST_CASE("linearity and positive semidefiniteness")
{
  auto const sens = simulate_sensitivities(16, 16, 4, 2);
  auto const m = make_mask(MaskKind::PseudoRadial, 16, 16, 4, 1);
  EncodingOperator<float> const op(sens, m.grid);
  auto const x1 = random_complex({2, 16, 16}, 20);
  auto const x2 = random_complex({2, 16, 16}, 21);
  std::complex<float> const a(1.5f, -0.25f);
  ComplexTensor comb(x1.shape());
  comb.vec() = a * x1.vec() + x2.vec();
  auto const lhs = op.forward(comb);
  ComplexTensor rhs(lhs.shape());
  rhs.vec() = a * op.forward(x1).vec() + op.forward(x2).vec();
  CHECK(rel_diff(lhs, rhs) < 1e-5);

  for (std::uint64_t s = 0; s < 5; s++) {
    auto const x = random_complex({2, 16, 16}, 30 + s);
    auto const q = inner(x, op.normal(x, 0.0f));
    double const n2 = norm(x) * norm(x);
    CHECK(std::abs(q.imag()) < 1e-5 * n2);
    CHECK(q.real() >= -1e-6 * n2);
  }
}

TEST_CASE("normal operator matches the explicit matrix")
{
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    SamplingMask const m = kind == MaskKind::PseudoRadial ? make_pseudo_radial_mask(6, 6, 2, 4)
                           : kind == MaskKind::Uniform    ? make_uniform_mask(6, 6, 2, 2, 1)
                                                          : make_gaussian_mask(6, 6, 2, 2, 4);
    auto const sens = simulate_sensitivities(6, 6, 2, 8);
    auto const e = oracle::encoding_matrix(sens, m.grid);
    for (float mu : {0.0f, 0.3f}) {
      auto const x = random_complex({1, 6, 6}, 40);
      auto const got = oracle::to_vector(normal(x, sens, m.grid, mu));
      Eigen::VectorXcd const want = oracle::normal_matrix(e, mu) * oracle::to_vector(x);
      CHECK((got - want).norm() / want.norm() < 1e-6);
    }
    auto const x = random_complex({1, 6, 6}, 41);
    auto const k = oracle::to_vector(forward(x, sens, m.grid));
    CHECK((k - e * oracle::to_vector(x)).norm() / k.norm() < 1e-6);
  }
}

TEST_CASE("line masks take the row-transform shortcut without changing results")
{
  auto const sens = simulate_sensitivities(16, 12, 3, 2);
  auto const m = make_mask(MaskKind::Uniform, 16, 12, 4, 1);
  REQUIRE(is_line_mask(m.grid));
  auto const x = random_complex({2, 16, 12}, 50);
  auto const direct = adjoint(forward(x, sens, m.grid), sens, m.grid);
  ComplexTensor expect(x.shape());
  expect.vec() = direct.vec() + 0.2f * x.vec();
  CHECK(rel_diff(normal(x, sens, m.grid, 0.2f), expect) < 1e-5);
}

TEST_CASE("retrospective undersampling")
{
  auto const k = random_complex({2, 3, 8, 8}, 60);
  CHECK(retrospective_undersample(k, full_grid(8, 8)) == k);
  auto const m = make_uniform_mask(8, 8, 4, 0, 1);
  auto const u = retrospective_undersample(k, m.grid);
  std::set<Index> nonzero;
  for (Index c = 0; c < 2; c++) {
    for (Index t = 0; t < 3; t++) {
      for (Index kx = 0; kx < 8; kx++) {
        for (Index ky = 0; ky < 8; ky++) {
          if (u(c, t, kx, ky) != std::complex<float>(0)) {
            nonzero.insert(ky);
          } else {
            CHECK(!m.grid(kx, ky));
          }
        }
      }
    }
  }
  CHECK(nonzero == std::set<Index>{1, 5});
  CHECK_THROWS_AS(retrospective_undersample(k, full_grid(8, 6)), Error);
}
