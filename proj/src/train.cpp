#include "unrollkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <random>

namespace unrollkit {

std::string to_string(Method m)
{
  switch (m) {
  case Method::FixedUNet: return "FixedUNet";
  case Method::AdaptiveUNet: return "AdaptiveUNet";
  case Method::FixedPCP: return "FixedPCP";
  case Method::AdaptivePCP: return "AdaptivePCP";
  }
  return "?";
}

Method parse_method(std::string const &name)
{
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto m : kAllMethods) {
    std::string cand = to_string(m);
    std::transform(cand.begin(), cand.end(), cand.begin(), [](unsigned char c) { return std::tolower(c); });
    if (cand == lower) {
      return m;
    }
  }
  throw Error("unknown method '" + name + "' (expected FixedUNet, AdaptiveUNet, FixedPCP or AdaptivePCP)");
}

CascadeConfig method_config(Method m)
{
  bool const adaptive = m == Method::AdaptiveUNet || m == Method::AdaptivePCP;
  bool const pcp = m == Method::FixedPCP || m == Method::AdaptivePCP;
  return CascadeConfig::desk(adaptive, pcp ? nn::NetKind::PCPUNet : nn::NetKind::PlainUNet);
}

template <typename Scalar>
nn::Var recon_loss(nn::Graph<Scalar> &g, nn::Var x, Tensor<Scalar> const &target, LossWeights const &w)
{
  using namespace nn;
  RequireSameShape(g.value(x).shape(), target.shape(), "recon_loss");
  Scalar const eps = static_cast<Scalar>(1e-12);
  Var const mx = complex_abs(g, x, eps);
  Var const my = complex_abs(g, g.constant(target), eps);

  Var loss = scale(g, mean(g, square(g, sub(g, mx, my))), static_cast<Scalar>(w.alpha));
  if (w.beta != 0) {
    double const range = g.value(my).vec().maxCoeff();
    if (!(range > 0)) {
      throw Error("recon_loss: target has zero data range");
    }
    auto const c1 = static_cast<Scalar>(std::pow(0.01 * range, 2));
    auto const c2 = static_cast<Scalar>(std::pow(0.03 * range, 2));
    auto blur = [&](Var v) { return gaussian_blur(g, v, 1.5, 5); };
    Var const mux = blur(mx), muy = blur(my);
    Var const muxx = mul(g, mux, mux), muyy = mul(g, muy, muy), muxy = mul(g, mux, muy);
    Var const sxx = sub(g, blur(mul(g, mx, mx)), muxx);
    Var const syy = sub(g, blur(mul(g, my, my)), muyy);
    Var const sxy = sub(g, blur(mul(g, mx, my)), muxy);
    Var const num = mul(g, add_scalar(g, scale(g, muxy, Scalar(2)), c1), add_scalar(g, scale(g, sxy, Scalar(2)), c2));
    Var const den = mul(g, add_scalar(g, add(g, muxx, muyy), c1), add_scalar(g, add(g, sxx, syy), c2));
    Var const s = mean(g, div(g, num, den));
    loss = add(g, loss, add_scalar(g, scale(g, s, static_cast<Scalar>(-w.beta)), static_cast<Scalar>(w.beta)));
  }
  return loss;
}

AdamState make_adam_state(std::vector<nn::ParamStore<float>> const &params)
{
  AdamState s;
  for (auto const &p : params) {
    s.m.push_back(p.zeros_like());
    s.v.push_back(p.zeros_like());
  }
  return s;
}

bool adam_step(std::vector<nn::ParamStore<float>> &params,
               std::vector<nn::ParamStore<float>> const &grads,
               AdamState &state,
               double lr)
{
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error("adam_step: parameter, gradient and state lists differ in length");
  }
  for (size_t i = 0; i < params.size(); i++) {
    for (auto const &name : params[i].names()) {
      RequireSameShape(params[i].at(name).shape(), grads[i].at(name).shape(), "adam_step");
      if (!grads[i].at(name).vec().allFinite()) {
        state.skipped++;
        return false;
      }
    }
  }
  state.step++;
  double const c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double const c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); i++) {
    for (auto const &name : params[i].names()) {
      auto g = grads[i].at(name).vec().cast<double>().array();
      auto m = state.m[i].at(name).array();
      auto v = state.v[i].at(name).array();
      m = (b1 * m.cast<double>() + (1 - b1) * g).cast<float>();
      v = (b2 * v.cast<double>() + (1 - b2) * g.square()).cast<float>();
      auto const mhat = m.cast<double>() / c1;
      auto const vhat = v.cast<double>() / c2;
      params[i].at(name).array() -= (lr * mhat / (vhat.sqrt() + eps)).cast<float>();
    }
  }
  return true;
}

double sample_loss(Model const &model, ReconSample const &s, LossWeights const &w,
                   std::vector<nn::ParamStore<float>> *grads)
{
  nn::Graph<float> g;
  std::vector<nn::Bound<float>> bound;
  for (auto const &st : model.stages) {
    bound.push_back(nn::bind(g, st, grads != nullptr));
  }
  auto const problem = make_problem(s.y, s.mask, s.sens, s.contrast_id);
  nn::Var const x = cascade_forward(g, model, bound, problem);
  nn::Var const loss = recon_loss(g, x, to_two_channel(s.target), w);
  double const value = g.value(loss)[0];
  if (grads && std::isfinite(value)) {
    g.backward(loss);
    for (size_t i = 0; i < bound.size(); i++) {
      nn::accumulate_grads(g, bound[i], (*grads)[i]);
    }
  }
  return value;
}

namespace {

void clip_global_norm(std::vector<nn::ParamStore<float>> &grads, double max_norm)
{
  double sq = 0;
  for (auto const &s : grads) {
    for (auto const &n : s.names()) {
      sq += s.at(n).vec().cast<double>().squaredNorm();
    }
  }
  double const norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    auto const f = static_cast<float>(max_norm / norm);
    for (auto &s : grads) {
      for (auto const &n : s.names()) {
        s.at(n).vec() *= f;
      }
    }
  }
}

} // namespace

TrainResult train(TrainConfig const &config, std::vector<ReconSample> const &dataset, ProgressFn progress)
{
  if (dataset.empty()) {
    throw Error("train: dataset is empty");
  }
  if (config.epochs < 0 || config.batch_size < 1 || !(config.lr > 0)) {
    throw Error("train: invalid epochs, batch size or learning rate");
  }
  CascadeConfig cc = method_config(config.method);
  auto const kind = cc.net.kind;
  cc.net = config.net;
  cc.net.kind = kind;
  TrainResult res{init_model(cc, config.seed), {}, 0};
  AdamState adam = make_adam_state(res.model.stages);

  std::vector<size_t> order(dataset.size());
  std::mt19937_64 rng(mix_seed(config.seed, 0x7261696eULL));
  for (Index epoch = 0; epoch < config.epochs; epoch++) {
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t const stop = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<nn::ParamStore<float>> grads;
      for (auto const &st : res.model.stages) {
        grads.push_back(st.zeros_like());
      }
      for (size_t k = start; k < stop; k++) {
        double const l = sample_loss(res.model, dataset[order[k]], config.loss, &grads);
        if (!std::isfinite(l)) {
          throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                      std::to_string(order[k]) + " (" + to_string(config.method) + ", lr " +
                      std::to_string(config.lr) + ")");
        }
        total += l;
      }
      float const inv = 1.0f / static_cast<float>(stop - start);
      for (auto &s : grads) {
        for (auto const &n : s.names()) {
          s.at(n).vec() *= inv;
        }
      }
      if (config.grad_clip > 0) {
        clip_global_norm(grads, config.grad_clip);
      }
      adam_step(res.model.stages, grads, adam, config.lr);
    }
    res.loss_history.push_back(total / static_cast<double>(dataset.size()));
    if (progress) {
      progress(epoch, res.loss_history.back());
    }
  }
  res.skipped_steps = adam.skipped;
  return res;
}

namespace {

AggregateRow aggregate(std::string method, std::string stratum, std::vector<MetricsRow const *> const &rows)
{
  AggregateRow a{std::move(method), std::move(stratum), static_cast<Index>(rows.size())};
  Eigen::ArrayXd s(rows.size()), e(rows.size());
  for (size_t i = 0; i < rows.size(); i++) {
    s[i] = rows[i]->ssim;
    e[i] = rows[i]->nmrse;
  }
  a.ssim_mean = s.mean();
  a.nmrse_mean = e.mean();
  if (rows.size() > 1) {
    double const d = static_cast<double>(rows.size() - 1);
    a.ssim_std = std::sqrt((s - a.ssim_mean).square().sum() / d);
    a.nmrse_std = std::sqrt((e - a.nmrse_mean).square().sum() / d);
  }
  return a;
}

} // namespace

MetricsReport benchmark(std::vector<std::pair<std::string, Model>> const &models,
                        std::vector<ReconSample> const &dataset)
{
  if (models.empty()) {
    throw Error("benchmark: no checkpoints given");
  }
  MetricsReport report;
  for (auto const &[name, model] : models) {
    for (auto const &s : dataset) {
      auto const x = reconstruct(s.y, s.mask, s.sens, s.contrast_id, model);
      auto const mx = magnitude(x), mt = magnitude(s.target);
      report.rows.push_back({name, s.mask.kind, s.mask.nominal_rate, s.contrast_id, s.seed, ssim(mx, mt), nmrse(mx, mt)});
    }
  }

  // stratum label per sample index; row i of method m sits at m * |dataset| + i
  auto strata_of = [](MetricsRow const &r) {
    return std::vector<std::string>{"all",
                                    "kind=" + to_string(r.kind) + ";rate=" + std::to_string(r.rate),
                                    "contrast=" + std::to_string(r.contrast)};
  };
  size_t const n = dataset.size();
  for (size_t m = 0; m < models.size(); m++) {
    std::map<std::string, std::vector<MetricsRow const *>> groups;
    std::vector<std::string> order;
    for (size_t i = 0; i < n; i++) {
      auto const &r = report.rows[m * n + i];
      for (auto const &st : strata_of(r)) {
        if (!groups.count(st)) {
          order.push_back(st);
        }
        groups[st].push_back(&r);
      }
    }
    for (auto const &st : order) {
      report.aggregates.push_back(aggregate(models[m].first, st, groups[st]));
    }
  }

  std::vector<std::string> test_strata{"all"};
  for (size_t i = 0; i < n; i++) {
    auto const st = "kind=" + to_string(dataset[i].mask.kind);
    if (std::find(test_strata.begin(), test_strata.end(), st) == test_strata.end()) {
      test_strata.push_back(st);
    }
  }
  for (size_t a = 0; a < models.size(); a++) {
    for (size_t b = a + 1; b < models.size(); b++) {
      for (auto const &st : test_strata) {
        std::vector<double> sa, sb;
        for (size_t i = 0; i < n; i++) {
          if (st == "all" || st == "kind=" + to_string(dataset[i].mask.kind)) {
            sa.push_back(report.rows[a * n + i].ssim);
            sb.push_back(report.rows[b * n + i].ssim);
          }
        }
        TTestRow row{models[a].first, models[b].first, st, {}};
        try {
          row.result = paired_t_test(sa, sb);
        } catch (Error const &) {
          double const nan = std::numeric_limits<double>::quiet_NaN();
          row.result = {nan, nan, static_cast<Index>(sa.size())};
        }
        report.ttests.push_back(row);
      }
    }
  }
  return report;
}

void write_rows_csv(std::ostream &out, std::vector<MetricsRow> const &rows)
{
  out << "method,kind,rate,contrast,seed,ssim,nmrse\n";
  out.precision(8);
  for (auto const &r : rows) {
    out << r.method << "," << to_string(r.kind) << "," << r.rate << "," << r.contrast << "," << r.seed << ","
        << r.ssim << "," << r.nmrse << "\n";
  }
}

void write_aggregates_csv(std::ostream &out, std::vector<AggregateRow> const &rows)
{
  out << "method,stratum,n,ssim_mean,ssim_std,nmrse_mean,nmrse_std\n";
  out.precision(8);
  for (auto const &r : rows) {
    out << r.method << "," << r.stratum << "," << r.n << "," << r.ssim_mean << "," << r.ssim_std << ","
        << r.nmrse_mean << "," << r.nmrse_std << "\n";
  }
}

void write_ttests_csv(std::ostream &out, std::vector<TTestRow> const &rows)
{
  out << "method_a,method_b,stratum,t,p,n\n";
  out.precision(8);
  for (auto const &r : rows) {
    out << r.method_a << "," << r.method_b << "," << r.stratum << "," << r.result.t << "," << r.result.p << ","
        << r.result.n << "\n";
  }
}

template nn::Var recon_loss(nn::Graph<float> &, nn::Var, Tensor<float> const &, LossWeights const &);
template nn::Var recon_loss(nn::Graph<double> &, nn::Var, Tensor<double> const &, LossWeights const &);

} // namespace unrollkit
