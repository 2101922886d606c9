// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "dense_oracle.hpp"
#include "layer_checks.hpp"
#include "t_oracle.hpp"
#include "testutil.hpp"
#include "unrollkit/fft.hpp"
#include "unrollkit/io.hpp"
#include "unrollkit/train.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace unrollkit;
using testutil::random_complex;
using testutil::rel_diff;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

struct Criterion
{
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::ofstream report;

// Informational lines go to stdout and, when requested, to the report file.
void note(std::string const &text)
{
  std::cout << "    " << text << std::endl;
  if (report.is_open()) {
    report << "    " << text << std::endl;
  }
}

std::string fmt(char const *f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome adjoint_correctness()
{
  double worst = 0;
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    for (std::uint64_t i = 0; i < 20; i++) {
      auto const m = make_mask(kind, 16, 16, 4, i);
      EncodingOperator<float> const op(simulate_sensitivities(16, 16, 4, 1000 + i), m.grid);
      auto const x = random_complex({2, 16, 16}, 2 * i);
      auto const y = random_complex({4, 2, 16, 16}, 2 * i + 1);
      double const e = std::abs(inner(op.forward(x), y) - inner(x, op.adjoint(y))) / (norm(x) * norm(y));
      worst = std::max(worst, e);
    }
  }
  return {worst < 1e-5, "max relative mismatch " + fmt("%.2e", worst)};
}

Outcome cg_dense_oracle()
{
  double worst = 0;
  int cases = 0;
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    auto const m = kind == MaskKind::PseudoRadial ? make_pseudo_radial_mask(6, 6, 2, 3)
                   : kind == MaskKind::Uniform    ? make_uniform_mask(6, 6, 2, 2, 1)
                                                  : make_gaussian_mask(6, 6, 2, 2, 3);
    auto const sens = simulate_sensitivities(6, 6, 2, 21);
    auto const e = oracle::encoding_matrix(sens, m.grid);
    for (double mu : {0.01, 1.0}) {
      auto const y = retrospective_undersample(random_complex<double>({2, 1, 6, 6}, 30 + cases), m.grid);
      auto const u = random_complex<double>({1, 6, 6}, 60 + cases);
      auto const res = cg_solve<double>(u, y, sens.cast<double>(), m.grid, mu, 72, 1e-14);
      Eigen::VectorXcd const rhs = e.adjoint() * y.vec() + mu * u.vec();
      Eigen::VectorXcd const want = oracle::normal_matrix(e, mu).ldlt().solve(rhs);
      worst = std::max(worst, (res.x.vec() - want).norm() / want.norm());
      cases++;
    }
  }
  return {worst < 1e-6, std::to_string(cases) + " systems, max relative error " + fmt("%.2e", worst)};
}

Outcome gradient_fidelity()
{
  double worst_layer = 0, worst_net = 0;
  std::string worst_name;
  for (auto const &c : gradcheck::layer_cases()) {
    double const e = gradcheck::check(c.fn, c.inputs).rel_error;
    if (e > worst_layer) {
      worst_layer = e;
      worst_name = c.name;
    }
  }
  for (auto kind : {nn::NetKind::PlainUNet, nn::NetKind::PCPUNet}) {
    auto const c = gradcheck::network_case(kind);
    worst_net = std::max(worst_net, gradcheck::check(c.fn, c.inputs, 1e-5, 32).rel_error);
  }
  return {worst_layer < 1e-4 && worst_net < 1e-3, "worst layer " + worst_name + " " + fmt("%.2e", worst_layer) +
                                                     ", end-to-end " + fmt("%.2e", worst_net)};
}

Outcome embedding_separability()
{
  std::vector<Eigen::VectorXd> feats;
  std::vector<int> labels;
  int k = 0;
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    for (Index rate : kStandardRates) {
      for (std::uint64_t seed = 0; seed < 50; seed++) {
        feats.push_back(pattern_embedding(make_mask(kind, 64, 64, rate, seed)).v);
        labels.push_back(k);
      }
    }
    k++;
  }
  // standardise each coordinate, then leave-one-out nearest centroid
  Index const n = static_cast<Index>(feats.size());
  Eigen::MatrixXd X(n, PatternEmbedding::kSize);
  for (Index i = 0; i < n; i++) {
    X.row(i) = feats[i].transpose();
  }
  Eigen::RowVectorXd const mean = X.colwise().mean();
  Eigen::RowVectorXd sd = ((X.rowwise() - mean).array().square().colwise().sum() / n).sqrt();
  sd = sd.unaryExpr([](double v) { return v > 0 ? v : 1.0; });
  X = (X.rowwise() - mean).array().rowwise() / sd.array();

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(3, X.cols());
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  for (Index i = 0; i < n; i++) {
    sums.row(labels[i]) += X.row(i);
    counts[labels[i]] += 1;
  }
  int correct = 0;
  for (Index i = 0; i < n; i++) {
    int best = -1;
    double best_d = 0;
    for (int c = 0; c < 3; c++) {
      Eigen::RowVectorXd centroid = sums.row(c);
      double count = counts[c];
      if (c == labels[i]) {
        centroid -= X.row(i);
        count -= 1;
      }
      centroid /= count;
      double const d = (X.row(i) - centroid).squaredNorm();
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    correct += best == labels[i] ? 1 : 0;
  }
  double const acc = static_cast<double>(correct) / n;
  return {acc >= 0.99, std::to_string(correct) + "/" + std::to_string(n) + " correct (" + fmt("%.2f", 100 * acc) +
                         "%, leave-one-out)"};
}

Outcome routing_contract()
{
  auto const cfg = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  auto const model = init_model(cfg, 1);
  bool ok = entry_index(24, cfg) == 0;
  Index prev = cfg.n_ui;
  std::string trace;
  DatasetSpec spec;
  spec.nx = spec.ny = 16;
  spec.nt = 4;
  spec.ncoils = 2;
  for (Index rate : kStandardRates) {
    Index const e = entry_index(static_cast<double>(rate), cfg);
    ok = ok && e <= prev;
    prev = e;
    auto const s = make_sample(spec, MaskKind::GaussianRandom, rate, 0, static_cast<std::uint64_t>(rate));
    ReconTrace t;
    reconstruct(s.y, s.mask, s.sens, s.contrast_id, model, &t);
    ok = ok && t.entry == e && t.executed == cfg.n_ui - e;
    trace += (trace.empty() ? "" : " ") + std::to_string(rate) + "->" + std::to_string(t.executed);
  }
  return {ok, "UIs executed per rate: " + trace};
}

Outcome cascade_identity()
{
  auto const cfg = CascadeConfig::desk(true, nn::NetKind::PCPUNet);
  auto const model = init_model(cfg, 2);
  double worst_cg = 0;
  DatasetSpec spec;
  spec.nx = spec.ny = 32;
  spec.nt = 4;
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    for (Index rate : {4, 16, 24}) {
      auto const s = make_sample(spec, kind, rate, 1, 7 + rate);
      auto const x = reconstruct(s.y, s.mask, s.sens, s.contrast_id, model);
      EncodingOperator<float> const op(s.sens, s.mask.grid);
      auto const aty = op.adjoint(s.y);
      ComplexTensor ref = aty;
      for (Index i = entry_index(rate, cfg); i < cfg.n_ui; i++) {
        ref = cg_solve(op, ref, aty, std::exp(model.stages[i].at("log_mu")[0]), cfg.cg_iters, cfg.cg_tol).x;
      }
      worst_cg = std::max(worst_cg, rel_diff(x, ref));
    }
  }
  SamplingMask full;
  full.nominal_rate = 1;
  full.grid = full_grid(32, 32);
  CoilSensitivities<float> unit{ComplexTensor::Constant({1, 32, 32}, 1.0f)};
  auto const y = random_complex({1, 4, 32, 32}, 5);
  double const ifft_err = rel_diff(reconstruct(y, full, unit, 0, model), ifft2c(y.reshaped({4, 32, 32})));
  return {worst_cg < 1e-5 && ifft_err < 1e-5,
          "vs CG-SENSE " + fmt("%.2e", worst_cg) + ", fully sampled vs ifft2c " + fmt("%.2e", ifft_err)};
}

Outcome desk_ordering()
{
  DatasetSpec train_spec;
  train_spec.nx = train_spec.ny = 64;
  train_spec.nt = 8;
  train_spec.rates = {8, 16, 24};
  train_spec.seed = 11;
  train_spec.n_per_cell = 1;
  DatasetSpec test_spec = train_spec;
  test_spec.seed = 33;
  test_spec.n_per_cell = 2;
  auto const train_set = build_dataset(train_spec);
  auto const test_set = build_dataset(test_spec);

  std::vector<std::pair<std::string, Model>> models;
  bool descended = true;
  for (auto m : kAllMethods) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.epochs = 20;
    cfg.batch_size = 1;
    cfg.lr = 1e-3;
    cfg.seed = 5;
    auto const t0 = std::chrono::steady_clock::now();
    auto const r = train(cfg, train_set);
    double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    note(to_string(m) + ": loss " + fmt("%.5f", r.loss_history.front()) + " -> " + fmt("%.5f", r.loss_history.back()) +
         " in " + fmt("%.0f", secs) + " s");
    descended = descended && r.loss_history.back() < r.loss_history.front();
    models.emplace_back(to_string(m), r.model);
  }
  auto const report = benchmark(models, test_set);
  std::map<std::string, AggregateRow> all;
  for (auto const &a : report.aggregates) {
    if (a.stratum == "all") {
      all[a.method] = a;
    }
  }
  for (auto m : kAllMethods) {
    auto const &a = all.at(to_string(m));
    note(to_string(m) + ": SSIM " + fmt("%.4f", a.ssim_mean) + " NMRSE " + fmt("%.4f", a.nmrse_mean));
  }
  // mean SSIM per method and rate, to show where routing gains or loses
  std::map<std::string, std::map<Index, std::pair<double, int>>> by_rate;
  for (auto const &r : report.rows) {
    auto &cell = by_rate[r.method][r.rate];
    cell.first += r.ssim;
    cell.second += 1;
  }
  for (auto m : kAllMethods) {
    std::string text = to_string(m) + " SSIM by rate:";
    for (auto const &[rate, cell] : by_rate[to_string(m)]) {
      text += " " + std::to_string(rate) + ": " + fmt("%.4f", cell.first / cell.second);
    }
    note(text);
  }
  TTest tt;
  for (auto const &t : report.ttests) {
    if (t.method_a == "FixedUNet" && t.method_b == "AdaptivePCP" && t.stratum == "all") {
      tt = t.result;
    }
  }
  auto const &ap = all.at("AdaptivePCP");
  auto const &fu = all.at("FixedUNet");
  std::vector<std::pair<double, std::string>> order;
  for (auto const &[name, a] : all) {
    order.emplace_back(-a.ssim_mean, name);
  }
  std::sort(order.begin(), order.end());
  std::string ranking;
  for (auto const &[s, name] : order) {
    ranking += (ranking.empty() ? "" : " > ") + name;
  }
  note("SSIM ranking (reported, not gated): " + ranking);
  bool const pass = ap.ssim_mean > fu.ssim_mean && tt.p < 0.05 && ap.nmrse_mean < fu.nmrse_mean;
  return {pass, "AdaptivePCP vs FixedUNet: SSIM " + fmt("%.4f", ap.ssim_mean) + " vs " + fmt("%.4f", fu.ssim_mean) +
                  ", paired p " + fmt("%.2e", tt.p) + ", NMRSE " + fmt("%.4f", ap.nmrse_mean) + " vs " +
                  fmt("%.4f", fu.nmrse_mean) + (descended ? "" : ", training loss did not fall for every method")};
}

Outcome metric_fixed_points()
{
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 4; seed++) {
    auto const x = magnitude(generate_phantom({64, 64, 8, static_cast<Index>(seed), seed, 0.04}));
    ok = ok && ssim(x, x) == 1.0 && nmrse(x, x) == 0.0;
    auto const r = testutil::random_real({3, 16, 12}, seed);
    Tensor<float> pos(r.shape(), r.vec().cwiseAbs());
    ok = ok && ssim(pos, pos) == 1.0 && nmrse(pos, pos) == 0.0;
  }
  bool crop_ok = true;
  for (Index nx = 2; nx <= 128; nx += 2) {
    for (Index ny = 2; ny <= 128; ny += 2) {
      auto const c = crop_region(nx, ny);
      Index const h = std::lround(2.0 * ny / 3.0);
      crop_ok = crop_ok && c.nx == nx / 2 && c.ny == h && c.x0 == (nx - nx / 2) / 2 && c.y0 == (ny - h) / 2;
    }
  }
  return {ok && crop_ok, std::string("fixed points ") + (ok ? "exact" : "violated") + ", crop rule " +
                           (crop_ok ? "holds" : "violated") + " for all even sizes up to 128"};
}

Outcome channel_shift_contract()
{
  bool ok = true;
  for (auto kind : {MaskKind::Uniform, MaskKind::GaussianRandom, MaskKind::PseudoRadial}) {
    auto const x = testutil::random_real({2, 4, 16, 12}, static_cast<std::uint64_t>(kind));
    std::vector<std::vector<Shift>> sets{default_shifts(kind, 16, 12), {{0, 1}}, {{3, 0}, {1, 5}, {-2, 7}, {8, 6}, {0, 11}}};
    for (auto const &shifts : sets) {
      auto const out = channel_shift_augment(x, shifts);
      Index const n = x.size();
      ok = ok && out.dim(0) == 2 * (1 + static_cast<Index>(shifts.size()));
      ok = ok && Tensor<float>(x.shape(), out.vec().head(n)) == x;
      for (size_t s = 0; s < shifts.size(); s++) {
        Tensor<float> rep(x.shape(), out.vec().segment(static_cast<Index>(s + 1) * n, n));
        ok = ok && circ_shift(circ_shift(rep, 2, -shifts[s].first), 3, -shifts[s].second) == x;
      }
    }
  }
  return {ok, ok ? "projection and inverse shifts bit-exact, channel counts match" : "contract violated"};
}

Outcome io_round_trip()
{
  auto const dir = fs::temp_directory_path() / "unrollkit_acceptance_io";
  fs::remove_all(dir);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<Index> rank(1, 5), ext(1, 6), unit(0, 2);
  int exact = 0, degenerate = 0;
  for (int i = 0; i < 50; i++) {
    Shape shape(static_cast<size_t>(rank(rng)));
    for (auto &e : shape) {
      e = unit(rng) == 0 ? 1 : ext(rng);
    }
    degenerate += std::count(shape.begin(), shape.end(), Index{1}) > 0 ? 1 : 0;
    auto const t = random_complex(shape, 1000 + i);
    write_cfl(dir / ("t" + std::to_string(i)), t);
    auto const back = read_cfl(dir / ("t" + std::to_string(i)), t.rank());
    exact += back == t && std::memcmp(back.data(), t.data(), sizeof(t[0]) * t.size()) == 0 ? 1 : 0;
  }
  fs::remove_all(dir);
  return {exact == 50, std::to_string(exact) + "/50 bit-exact, " + std::to_string(degenerate) +
                         " with unit extents"};
}

Outcome t_test_oracle()
{
  double worst = 0;
  for (double t : {0.0, 1.0, 3.0}) {
    for (double n : {5.0, 9.0, 30.0}) {
      worst = std::max(worst, std::abs(student_t_two_sided_p(t, n - 1) - oracle::t_two_sided_p(t, n - 1)));
    }
  }
  return {worst < 1e-4, "max |p - quadrature| " + fmt("%.2e", worst)};
}

} // namespace

// Arguments are criterion numbers to run (default: all); --report FILE also
// writes the verdict lines to FILE.
int main(int argc, char **argv)
{
  std::set<int> only;
  for (int i = 1; i < argc; i++) {
    std::string const arg = argv[i];
    if (arg == "--report" && i + 1 < argc) {
      report.open(argv[++i]);
    } else {
      only.insert(std::atoi(arg.c_str()));
    }
  }
  std::vector<Criterion> const criteria{
    {1, "adjoint correctness", 10, adjoint_correctness},
    {2, "CG vs dense oracle", 30, cg_dense_oracle},
    {3, "gradient fidelity", 300, gradient_fidelity},
    {4, "embedding separability", 60, embedding_separability},
    {5, "routing contract", 1, routing_contract},
    {6, "cascade identity baseline", 10, cascade_identity},
    {7, "desk-scale ordering", 45 * 60, desk_ordering},
    {8, "metric fixed points", 1, metric_fixed_points},
    {9, "channel-shift contract", 1, channel_shift_contract},
    {10, "I/O round trip", 5, io_round_trip},
    {11, "t-test oracle", 5, t_test_oracle},
  };
  int failed = 0;
  int ran = 0;
  for (auto const &c : criteria) {
    if (!only.empty() && !only.contains(c.id)) {
      continue;
    }
    ran++;
    auto const t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (std::exception const &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool const in_time = secs <= c.budget_s;
    bool const pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::ostringstream line;
    line << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " (" << fmt("%.2f", secs)
         << " s of " << fmt("%.0f", c.budget_s) << " s" << (in_time ? "" : ", over budget") << ")";
    std::cout << line.str() << std::endl;
    if (report.is_open()) {
      report << line.str() << std::endl;
    }
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  if (report.is_open()) {
    report << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
