#include "dense_oracle.hpp"
#include "testutil.hpp"
#include "unrollkit/cascade.hpp"
#include "unrollkit/fft.hpp"

#include <doctest.h>

using namespace unrollkit;
using testutil::random_complex;
using testutil::rel_diff;

namespace {

SamplingMask full_mask(Index nx, Index ny)
{
  SamplingMask m;
  m.kind = MaskKind::Uniform;
  m.nominal_rate = 1;
  m.grid = full_grid(nx, ny);
  return m;
}

// Randomises every parameter so each UI has a visible effect.
Model perturbed(Model m, std::uint64_t seed)
{
  for (auto &s : m.stages) {
    for (auto const &n : s.names()) {
      if (n.starts_with("out.")) {
        s.at(n).vec() = 0.05f * testutil::random_real(s.at(n).shape(), seed++).vec();
      }
    }
  }
  return m;
}

} // namespace

TEST_CASE("desk entry map")
{
  auto const c = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  Index const expect[] = {5, 4, 3, 2, 1, 0};
  Index prev = c.n_ui;
  for (int i = 0; i < 6; i++) {
    Index const e = entry_index(static_cast<double>(kStandardRates[i]), c);
    CHECK(e == expect[i]);
    CHECK(e <= prev);
    prev = e;
  }
  CHECK(entry_index(1, c) == c.n_ui - 1);
  CHECK(entry_index(24, c) == 0);
  CHECK(entry_index(100, c) == 0);
  CHECK(entry_index(9.5, c) == 3);
  for (double r = 1; r < 40; r += 0.25) {
    CHECK(entry_index(r + 0.25, c) <= entry_index(r, c));
  }
  auto const fixed = CascadeConfig::desk(false, nn::NetKind::PlainUNet);
  CHECK(start_index(4, fixed) == 0);
  CHECK(start_index(4, c) == 5);
}

TEST_CASE("config validation")
{
  auto c = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  c.entry_map = {{4, 5}, {8, 5}, {24, 1}};
  CHECK_THROWS_AS(c.validate(), Error);
  c.entry_map = {{8, 4}, {4, 5}, {24, 0}};
  CHECK_THROWS_AS(c.validate(), Error);
  c.entry_map = {{4, 6}, {24, 0}};
  CHECK_THROWS_AS(c.validate(), Error);
  c.entry_map = {{4, 2}, {24, 0}};
  CHECK_NOTHROW(c.validate());
  c.mu_init = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("CG on a fully sampled single-coil problem has a closed form")
{
  CoilSensitivities<float> unit{ComplexTensor::Constant({1, 8, 8}, 1.0f)};
  auto const y = random_complex({1, 2, 8, 8}, 1);
  auto const u = random_complex({2, 8, 8}, 2);
  float const mu = 0.3f;
  auto const res = cg_solve(u, y, unit, full_grid(8, 8), mu, 10, 1e-7);
  ComplexTensor expect(u.shape());
  expect.vec() = (ifft2c(y.reshaped({2, 8, 8})).vec() + mu * u.vec()) / (1 + mu);
  CHECK(rel_diff(res.x, expect) < 1e-5);

  auto const mask = make_mask(MaskKind::Uniform, 8, 8, 4, 0).grid;
  auto const y3 = retrospective_undersample(random_complex({3, 2, 8, 8}, 3), mask);
  auto const stiff = cg_solve(u, y3, simulate_sensitivities(8, 8, 3, 1), mask, 1e6f, 8, 1e-9);
  CHECK(rel_diff(stiff.x, u) < 1e-4);
}

TEST_CASE("CG agrees with a dense solve")
{
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    auto const m = kind == MaskKind::PseudoRadial ? make_pseudo_radial_mask(6, 6, 2, 1)
                   : kind == MaskKind::Uniform    ? make_uniform_mask(6, 6, 2, 2, 0)
                                                  : make_gaussian_mask(6, 6, 2, 2, 5);
    auto const sens = simulate_sensitivities(6, 6, 2, 4);
    auto const e = oracle::encoding_matrix(sens, m.grid);
    for (double mu : {0.01, 1.0}) {
      auto const y = retrospective_undersample(random_complex<double>({2, 1, 6, 6}, 7), m.grid);
      auto const u = random_complex<double>({1, 6, 6}, 8);
      auto const res = cg_solve<double>(u, y, sens.cast<double>(), m.grid, mu, 72, 1e-14);
      Eigen::VectorXcd const rhs = e.adjoint() * y.vec() + mu * u.vec();
      Eigen::VectorXcd const want = oracle::normal_matrix(e, mu).ldlt().solve(rhs);
      CHECK((res.x.vec() - want).norm() / want.norm() < 1e-6);
    }
  }
}

TEST_CASE("CG residual trace")
{
  auto const sens = simulate_sensitivities(16, 16, 4, 2);
  auto const m = make_mask(MaskKind::GaussianRandom, 16, 16, 4, 3);
  EncodingOperator<double> const op(sens.cast<double>(), m.grid);
  auto const y = retrospective_undersample(random_complex<double>({4, 2, 16, 16}, 9), m.grid);
  auto const res = cg_solve<double>(op, random_complex<double>({2, 16, 16}, 10), op.adjoint(y), 0.05, 30, 1e-10);
  CHECK(res.residuals.size() == static_cast<size_t>(res.iterations + 1));
  CHECK(res.residuals.back() < 1e-3 * res.residuals.front());
  // CG minimises the energy norm of the error, so the residual can rise briefly;
  // count the rises instead of forbidding them
  int rises = 0;
  for (size_t k = 1; k < res.residuals.size(); k++) {
    rises += res.residuals[k] > res.residuals[k - 1] + 1e-7 ? 1 : 0;
  }
  MESSAGE("residual increases over ", res.iterations, " iterations: ", rises);

  CHECK_THROWS_AS(cg_solve<double>(op, op.adjoint(y), op.adjoint(y), 0.0, 3, 0), Error);
  auto bad = op.adjoint(y);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(cg_solve<double>(op, bad, op.adjoint(y), 0.1, 3, 0), Error);
}

TEST_CASE("graph CG matches the plain solver")
{
  auto const sens = simulate_sensitivities(8, 8, 2, 2);
  auto const m = make_mask(MaskKind::GaussianRandom, 8, 8, 2, 3);
  auto const op = std::make_shared<EncodingOperator<float> const>(sens, m.grid);
  auto const aty = op->adjoint(retrospective_undersample(random_complex({2, 2, 8, 8}, 4), m.grid));
  auto const u = random_complex({2, 8, 8}, 5);
  nn::Graph<float> g;
  nn::Var const x = cg_solve(g, g.constant(to_two_channel(u)), g.constant(Tensor<float>::Constant({1}, 0.2f)), op,
                             aty, 6, 1e-5);
  auto const plain = cg_solve(*op, u, aty, 0.2f, 6, 1e-5);
  CHECK(from_two_channel(g.value(x)) == plain.x);
}

TEST_CASE("untrained cascade reduces to iterated CG-SENSE")
{
  auto const cfg = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  auto const model = init_model(cfg, 3);
  auto const sens = simulate_sensitivities(16, 16, 4, 4);
  for (Index rate : {4, 12, 24}) {
    auto const m = make_mask(MaskKind::GaussianRandom, 16, 16, rate, 5);
    auto const y = retrospective_undersample(forward(random_complex({4, 16, 16}, 6), sens, full_grid(16, 16)), m.grid);
    ReconTrace trace;
    auto const x = reconstruct(y, m, sens, 1, model, &trace);

    EncodingOperator<float> const op(sens, m.grid);
    auto const aty = op.adjoint(y);
    ComplexTensor ref = aty;
    for (Index i = entry_index(rate, cfg); i < cfg.n_ui; i++) {
      float const mu = std::exp(model.stages[i].at("log_mu")[0]);
      ref = cg_solve(op, ref, aty, mu, cfg.cg_iters, cfg.cg_tol).x;
    }
    CHECK(rel_diff(x, ref) < 1e-5);
    CHECK(trace.entry == entry_index(rate, cfg));
    CHECK(trace.executed == cfg.n_ui - trace.entry);
  }
}

TEST_CASE("untrained cascade returns the inverse transform of fully sampled single-coil data")
{
  auto const model = init_model(CascadeConfig::desk(true, nn::NetKind::PCPUNet), 1);
  CoilSensitivities<float> unit{ComplexTensor::Constant({1, 16, 16}, 1.0f)};
  auto const y = random_complex({1, 4, 16, 16}, 2);
  auto const x = reconstruct(y, full_mask(16, 16), unit, 0, model);
  CHECK(rel_diff(x, ifft2c(y.reshaped({4, 16, 16}))) < 1e-5);
}

TEST_CASE("routing, stage independence and determinism")
{
  auto const cfg = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  auto const model = perturbed(init_model(cfg, 7), 100);
  auto const sens = simulate_sensitivities(16, 16, 2, 1);
  auto const m = make_mask(MaskKind::Uniform, 16, 16, 8, 1);
  auto const y = retrospective_undersample(forward(random_complex({4, 16, 16}, 3), sens, full_grid(16, 16)), m.grid);

  ReconTrace trace;
  auto const x = reconstruct(y, m, sens, 2, model, &trace);
  CHECK(trace.executed == cfg.n_ui - entry_index(8, cfg));
  CHECK(reconstruct(y, m, sens, 2, model) == x);

  // rate 8 enters at UI 4, so UIs 0-3 are never read
  auto changed = model;
  for (Index i = 0; i < 4; i++) {
    changed.stages[i] = perturbed(model, 500 + i).stages[i];
    changed.stages[i].at("log_mu")[0] += 1.0f;
  }
  CHECK(reconstruct(y, m, sens, 2, changed) == x);
  changed.stages[5].at("log_mu")[0] += 1.0f;
  CHECK_FALSE(reconstruct(y, m, sens, 2, changed) == x);

  auto fixed_cfg = cfg;
  fixed_cfg.adaptive = false;
  auto fixed = model;
  fixed.config = fixed_cfg;
  ReconTrace ft;
  reconstruct(y, m, sens, 2, fixed, &ft);
  CHECK(ft.entry == 0);
  CHECK(ft.executed == cfg.n_ui);
}

TEST_CASE("model bookkeeping")
{
  auto const plain = init_model(CascadeConfig::desk(false, nn::NetKind::PlainUNet), 1);
  auto const pcp = init_model(CascadeConfig::desk(true, nn::NetKind::PCPUNet), 1);
  CHECK(plain.stages.size() == 6);
  for (Index i = 0; i < 6; i++) {
    CHECK_FALSE(plain.stages[i].contains("contrast_table"));
    CHECK_FALSE(plain.stages[i].contains("dec0.pattern.bank"));
    CHECK(pcp.stages[i].contains("contrast_table"));
    CHECK(pcp.stages[i].contains("dec0.pattern.bank"));
    CHECK(pcp.stages[i].contains("dec0.contrast.bank"));
    CHECK(std::exp(pcp.stages[i].at("log_mu")[0]) == doctest::Approx(0.05));
  }
  CHECK_FALSE(pcp.stages[0] == pcp.stages[1]);

  auto broken = pcp;
  broken.stages.pop_back();
  CHECK_THROWS_AS(check_model(broken), Error);
  broken = pcp;
  broken.config.net.base_channels = 4;
  CHECK_THROWS_AS(check_model(broken), Error);
}
