#include "unrollkit/cascade.hpp"

#include <cmath>

namespace unrollkit {

void CascadeConfig::validate() const
{
  if (n_ui < 1) {
    throw Error("cascade: n_ui must be >= 1");
  }
  if (entry_map.empty()) {
    throw Error("cascade: entry map is empty");
  }
  for (size_t i = 0; i < entry_map.size(); i++) {
    auto const [rate, entry] = entry_map[i];
    if (entry < 0 || entry >= n_ui) {
      throw Error("cascade: entry index " + std::to_string(entry) + " outside [0, n_ui)");
    }
    if (i > 0 && (rate <= entry_map[i - 1].first || entry > entry_map[i - 1].second)) {
      throw Error("cascade: entry map must ascend in rate and not increase in entry index");
    }
  }
  if (entry_map.back().second != 0) {
    throw Error("cascade: the highest rate bracket must enter at UI 0");
  }
  if (cg_iters < 0 || cg_tol < 0 || !(mu_init > 0)) {
    throw Error("cascade: invalid CG settings");
  }
  net.validate();
}

CascadeConfig CascadeConfig::desk(bool adaptive, nn::NetKind kind)
{
  CascadeConfig c;
  c.n_ui = 6;
  c.entry_map = {{4, 5}, {8, 4}, {12, 3}, {16, 2}, {20, 1}, {24, 0}};
  c.adaptive = adaptive;
  c.net.kind = kind;
  return c;
}

Index entry_index(double rate, CascadeConfig const &config)
{
  for (auto const &[max_rate, entry] : config.entry_map) {
    if (rate <= max_rate) {
      return entry;
    }
  }
  return 0;
}

Index start_index(double rate, CascadeConfig const &config)
{
  return config.adaptive ? entry_index(rate, config) : 0;
}

Model init_model(CascadeConfig const &config, std::uint64_t seed)
{
  config.validate();
  Model m{config, {}};
  for (Index i = 0; i < config.n_ui; i++) {
    std::uint64_t const stage_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    auto store = nn::init_net<float>(config.net, stage_seed);
    store.add("log_mu", Tensor<float>::Constant({1}, static_cast<float>(std::log(config.mu_init))));
    if (config.net.kind == nn::NetKind::PCPUNet) {
      store.add("contrast_table", init_contrast_table(kNumContrasts, config.net.contrast_dim, stage_seed ^ 0x5bd1e995ULL));
    }
    m.stages.push_back(std::move(store));
  }
  return m;
}

void check_model(Model const &model)
{
  model.config.validate();
  if (static_cast<Index>(model.stages.size()) != model.config.n_ui) {
    throw Error("model has " + std::to_string(model.stages.size()) + " parameter stores for " +
                std::to_string(model.config.n_ui) + " unrolled iterations");
  }
  for (auto const &s : model.stages) {
    for (auto const &[name, shape] : nn::net_layout(model.config.net)) {
      if (!s.contains(name) || s.at(name).shape() != shape) {
        throw Error("model parameters do not match the network spec at '" + name + "'");
      }
    }
    if (!s.contains("log_mu")) {
      throw Error("model stage is missing log_mu");
    }
    if (model.config.net.kind == nn::NetKind::PCPUNet && !s.contains("contrast_table")) {
      throw Error("prompt network stage is missing its contrast table");
    }
  }
}

namespace {

template <typename Real>
double rdot(CTensor<Real> const &a, CTensor<Real> const &b)
{
  return inner(a, b).real();
}

template <typename Real>
void axpy(double a, CTensor<Real> const &x, CTensor<Real> &y)
{
  y.vec() += static_cast<Real>(a) * x.vec();
}

template <typename Real>
struct CgTape
{
  std::vector<CTensor<Real>> p, q, r; // p_k, A p_k, r_{k+1}
  std::vector<double> alpha, beta, pq, rs; // rs holds rs_0..rs_K
  CTensor<Real> r0;
};

template <typename Real>
CgResult<Real> run_cg(EncodingOperator<Real> const &op,
                      CTensor<Real> const &u,
                      CTensor<Real> const &aty,
                      Real mu,
                      Index iters,
                      double tol,
                      CgTape<Real> *tape)
{
  RequireSameShape(u.shape(), aty.shape(), "cg_solve");
  if (!(mu > 0)) {
    throw Error("cg_solve: mu must be > 0");
  }
  if (!u.vec().allFinite() || !aty.vec().allFinite() || !std::isfinite(static_cast<double>(mu))) {
    throw Error("cg_solve: non-finite input");
  }
  CgResult<Real> res;
  res.x = u;
  CTensor<Real> b = aty;
  axpy(mu, u, b);
  double const bnorm = norm(b);
  // r0 = b - (M + mu) u = aty - M u
  CTensor<Real> r = aty;
  r.vec() -= op.normal(u, Real(0)).vec();
  CTensor<Real> p = r;
  double rs = rdot(r, r);
  res.residuals.push_back(std::sqrt(rs));
  if (tape) {
    tape->r0 = r;
    tape->rs.push_back(rs);
  }
  double const threshold = tol * bnorm;
  for (Index k = 0; k < iters && std::sqrt(rs) > threshold; k++) {
    CTensor<Real> q = op.normal(p, mu);
    double const pq = rdot(p, q);
    if (!(pq > 0)) {
      break;
    }
    double const alpha = rs / pq;
    axpy(alpha, p, res.x);
    axpy(-alpha, q, r);
    double const rs_next = rdot(r, r);
    res.residuals.push_back(std::sqrt(rs_next));
    res.iterations++;
    bool const last = k + 1 == iters || std::sqrt(rs_next) <= threshold;
    double const beta = last ? 0.0 : rs_next / rs;
    if (tape) {
      tape->p.push_back(p);
      tape->q.push_back(std::move(q));
      tape->r.push_back(r);
      tape->alpha.push_back(alpha);
      tape->beta.push_back(beta);
      tape->pq.push_back(pq);
      tape->rs.push_back(rs_next);
    }
    if (!last) {
      p.vec() = r.vec() + static_cast<Real>(beta) * p.vec();
    }
    rs = rs_next;
  }
  return res;
}

} // namespace

template <typename Real>
CgResult<Real> cg_solve(EncodingOperator<Real> const &op,
                        CTensor<Real> const &u,
                        CTensor<Real> const &aty,
                        Real mu,
                        Index iters,
                        double tol)
{
  return run_cg<Real>(op, u, aty, mu, iters, tol, nullptr);
}

template <typename Real>
CgResult<Real> cg_solve(CTensor<Real> const &u,
                        CTensor<Real> const &y,
                        CoilSensitivities<Real> const &sens,
                        MaskGrid const &mask,
                        Real mu,
                        Index iters,
                        double tol)
{
  EncodingOperator<Real> const op(sens, mask);
  return run_cg<Real>(op, u, op.adjoint(y), mu, iters, tol, nullptr);
}

template <typename Real>
nn::Var cg_solve(nn::Graph<Real> &g,
                 nn::Var u,
                 nn::Var mu,
                 std::shared_ptr<EncodingOperator<Real> const> op,
                 CTensor<Real> const &aty,
                 Index iters,
                 double tol)
{
  if (g.value(mu).size() != 1) {
    throw Error("cg_solve: mu must be a scalar");
  }
  Real const mu_value = g.value(mu)[0];
  auto tape = std::make_shared<CgTape<Real>>();
  bool const record = g.requires_grad(u) || g.requires_grad(mu);
  auto res = run_cg<Real>(*op, from_two_channel(g.value(u)), aty, mu_value, iters, tol, record ? tape.get() : nullptr);

  return g.record(to_two_channel(res.x), {u, mu}, [u, mu, op, tape, mu_value](nn::Graph<Real> &g, nn::Var out) {
    auto const &t = *tape;
    CTensor<Real> xbar = from_two_channel(g.grad(out));
    CTensor<Real> rbar(xbar.shape());
    CTensor<Real> pbar(xbar.shape());
    double carry = 0.0; // adjoint of rs_{k+1} from later steps
    double mubar = 0.0;
    for (Index k = static_cast<Index>(t.alpha.size()) - 1; k >= 0; k--) {
      auto const &p = t.p[k];
      auto const &q = t.q[k];
      double const alpha = t.alpha[k], beta = t.beta[k], pq = t.pq[k], rs = t.rs[k], rs_next = t.rs[k + 1];
      // p_{k+1} = r_{k+1} + beta p_k
      double const betabar = rdot(pbar, p);
      rbar.vec() += pbar.vec();
      CTensor<Real> pk_bar = pbar;
      pk_bar.vec() *= static_cast<Real>(beta);
      // beta = rs_{k+1} / rs_k
      double const rs_next_bar = carry + betabar / rs;
      double carry_k = -betabar * rs_next / (rs * rs);
      // rs_{k+1} = <r_{k+1}, r_{k+1}>
      axpy(2.0 * rs_next_bar, t.r[k], rbar);
      // r_{k+1} = r_k - alpha q_k ; x_{k+1} = x_k + alpha p_k
      CTensor<Real> qbar = rbar;
      qbar.vec() *= static_cast<Real>(-alpha);
      double alphabar = -rdot(rbar, q) + rdot(xbar, p);
      axpy(alpha, xbar, pk_bar);
      // alpha = rs_k / pq_k
      carry_k += alphabar / pq;
      double const pqbar = -alphabar * rs / (pq * pq);
      // pq_k = <p_k, q_k>
      axpy(pqbar, q, pk_bar);
      axpy(pqbar, p, qbar);
      // q_k = (M + mu) p_k, symmetric
      mubar += rdot(qbar, p);
      pk_bar.vec() += op->normal(qbar, mu_value).vec();
      pbar = std::move(pk_bar);
      carry = carry_k;
    }
    if (g.requires_grad(u)) {
      // p_0 = r_0, rs_0 = <r_0, r_0>, r_0 = aty - M u, x_0 = u
      rbar.vec() += pbar.vec();
      if (!t.rs.empty()) {
        axpy(2.0 * carry, t.r0, rbar);
      }
      CTensor<Real> ubar = xbar;
      ubar.vec() -= op->normal(rbar, Real(0)).vec();
      g.grad(u).vec() += to_two_channel(ubar).vec();
    }
    if (g.requires_grad(mu)) {
      g.grad(mu)[0] += static_cast<Real>(mubar);
    }
  });
}

template <typename Real>
CascadeProblem<Real> make_problem(CTensor<Real> const &y,
                                  SamplingMask const &mask,
                                  CoilSensitivities<Real> const &sens,
                                  Index contrast_id)
{
  CascadeProblem<Real> p;
  p.op = std::make_shared<EncodingOperator<Real> const>(sens, mask.grid);
  p.aty = p.op->adjoint(y);
  p.kind = mask.kind;
  auto const e = pattern_embedding(mask);
  p.pattern = Tensor<Real>({PatternEmbedding::kSize}, e.v.template cast<Real>());
  p.contrast_id = contrast_id;
  p.rate = mask.nominal_rate > 0 ? static_cast<double>(mask.nominal_rate) : achieved_rate(mask);
  return p;
}

template <typename Scalar>
nn::Var cascade_forward(nn::Graph<Scalar> &g,
                        Cascade<Scalar> const &model,
                        std::vector<nn::Bound<Scalar>> const &stages,
                        CascadeProblem<Scalar> const &problem,
                        ReconTrace *trace)
{
  auto const &cfg = model.config;
  if (static_cast<Index>(stages.size()) != cfg.n_ui) {
    throw Error("cascade_forward: expected one bound parameter set per UI");
  }
  bool const pcp = cfg.net.kind == nn::NetKind::PCPUNet;
  auto const &img = problem.aty;
  auto const shifts = default_shifts(problem.kind, img.dim(1), img.dim(2));
  nn::Var const p_emb = g.constant(problem.pattern);
  nn::Var const no_contrast = g.constant(Tensor<Scalar>({cfg.net.contrast_dim}));

  Index const first = start_index(problem.rate, cfg);
  nn::Var x = g.constant(to_two_channel(img));
  for (Index i = first; i < cfg.n_ui; i++) {
    auto const &p = stages[i];
    nn::Var const c_emb = pcp ? nn::table_row(g, p.at("contrast_table"), problem.contrast_id) : no_contrast;
    nn::Var const aug = channel_shift_augment(g, x, shifts);
    nn::Var const u = nn::net_forward(g, cfg.net, p, aug, c_emb, p_emb);
    nn::Var const mu = nn::exp(g, p.at("log_mu"));
    x = cg_solve(g, u, mu, problem.op, problem.aty, cfg.cg_iters, cfg.cg_tol);
  }
  if (trace) {
    trace->entry = first;
    trace->executed = cfg.n_ui - first;
  }
  return x;
}

ComplexTensor reconstruct(ComplexTensor const &y,
                          SamplingMask const &mask,
                          CoilSensitivities<float> const &sens,
                          Index contrast_id,
                          Model const &model,
                          ReconTrace *trace)
{
  check_model(model);
  auto const problem = make_problem(y, mask, sens, contrast_id);
  nn::Graph<float> g;
  std::vector<nn::Bound<float>> bound;
  for (auto const &s : model.stages) {
    bound.push_back(nn::bind(g, s, false));
  }
  nn::Var const x = cascade_forward(g, model, bound, problem, trace);
  return from_two_channel(g.value(x));
}

template CgResult<float> cg_solve(EncodingOperator<float> const &, CTensor<float> const &, CTensor<float> const &,
                                  float, Index, double);
template CgResult<double> cg_solve(EncodingOperator<double> const &, CTensor<double> const &,
                                   CTensor<double> const &, double, Index, double);
template CgResult<float> cg_solve(CTensor<float> const &, CTensor<float> const &, CoilSensitivities<float> const &,
                                  MaskGrid const &, float, Index, double);
template CgResult<double> cg_solve(CTensor<double> const &, CTensor<double> const &,
                                   CoilSensitivities<double> const &, MaskGrid const &, double, Index, double);
template nn::Var cg_solve(nn::Graph<float> &, nn::Var, nn::Var, std::shared_ptr<EncodingOperator<float> const>,
                          CTensor<float> const &, Index, double);
template nn::Var cg_solve(nn::Graph<double> &, nn::Var, nn::Var, std::shared_ptr<EncodingOperator<double> const>,
                          CTensor<double> const &, Index, double);
template CascadeProblem<float> make_problem(CTensor<float> const &, SamplingMask const &,
                                            CoilSensitivities<float> const &, Index);
template CascadeProblem<double> make_problem(CTensor<double> const &, SamplingMask const &,
                                             CoilSensitivities<double> const &, Index);
template nn::Var cascade_forward(nn::Graph<float> &, Cascade<float> const &, std::vector<nn::Bound<float>> const &,
                                 CascadeProblem<float> const &, ReconTrace *);
template nn::Var cascade_forward(nn::Graph<double> &, Cascade<double> const &,
                                 std::vector<nn::Bound<double>> const &, CascadeProblem<double> const &,
                                 ReconTrace *);

} // namespace unrollkit
