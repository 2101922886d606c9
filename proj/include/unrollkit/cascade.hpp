#pragma once

#include "channel_shift.hpp"
#include "embedding.hpp"
#include "forward_model.hpp"
#include "network.hpp"

#include <memory>

namespace unrollkit {

struct CascadeConfig
{
  Index n_ui = 6;
  // (max_rate, entry_index), ascending in max_rate. A rate enters at the first bracket that contains it.
  std::vector<std::pair<double, Index>> entry_map;
  // Fixed cascades run every UI regardless of rate.
  bool adaptive = true;
  Index cg_iters = 8;
  double cg_tol = 1e-5;
  double mu_init = 0.05;
  nn::NetSpec net;

  void validate() const;

  // n_ui = 6 with {4->5, 8->4, 12->3, 16->2, 20->1, 24->0}.
  static CascadeConfig desk(bool adaptive, nn::NetKind kind);
};

Index entry_index(double rate, CascadeConfig const &config);
// entry_index for adaptive cascades, 0 for fixed ones.
Index start_index(double rate, CascadeConfig const &config);

/* One parameter store per unrolled iteration: the regulariser network,
 * "log_mu" [1] and, for prompt networks, "contrast_table" [C, d_c].
 */
template <typename Scalar>
struct Cascade
{
  CascadeConfig config;
  std::vector<nn::ParamStore<Scalar>> stages;

  template <typename Other>
  Cascade<Other> cast() const
  {
    Cascade<Other> c{config, {}};
    for (auto const &s : stages) {
      c.stages.push_back(s.template cast<Other>());
    }
    return c;
  }
};

using Model = Cascade<float>;

Model init_model(CascadeConfig const &config, std::uint64_t seed);
void check_model(Model const &model);

template <typename Real>
struct CgResult
{
  CTensor<Real> x;
  std::vector<double> residuals; // ||r_k|| for k = 0..iterations
  Index iterations = 0;
};

/* Conjugate gradients on (E^H E + mu I) x = E^H y + mu u, starting from x = u.
 * Stops after `iters` steps or once ||r|| < tol * ||E^H y + mu u||.
 */
template <typename Real>
CgResult<Real> cg_solve(EncodingOperator<Real> const &op,
                        CTensor<Real> const &u,
                        CTensor<Real> const &aty,
                        Real mu,
                        Index iters,
                        double tol);

template <typename Real>
CgResult<Real> cg_solve(CTensor<Real> const &u,
                        CTensor<Real> const &y,
                        CoilSensitivities<Real> const &sens,
                        MaskGrid const &mask,
                        Real mu,
                        Index iters,
                        double tol);

/* Differentiable CG: u is two-channel [2, T, X, Y], mu is [1]. The backward
 * pass replays the recorded recurrence in reverse, so gradients are exact for
 * the truncated solve that was run.
 */
template <typename Real>
nn::Var cg_solve(nn::Graph<Real> &g,
                 nn::Var u,
                 nn::Var mu,
                 std::shared_ptr<EncodingOperator<Real> const> op,
                 CTensor<Real> const &aty,
                 Index iters,
                 double tol);

template <typename Real>
struct CascadeProblem
{
  std::shared_ptr<EncodingOperator<Real> const> op;
  CTensor<Real> aty; // E^H y
  MaskKind kind = MaskKind::Uniform;
  Tensor<Real> pattern; // [17]
  Index contrast_id = 0;
  double rate = 1.0;
};

template <typename Real>
CascadeProblem<Real> make_problem(CTensor<Real> const &y,
                                  SamplingMask const &mask,
                                  CoilSensitivities<Real> const &sens,
                                  Index contrast_id);

struct ReconTrace
{
  Index entry = 0;
  Index executed = 0;
};

template <typename Scalar>
nn::Var cascade_forward(nn::Graph<Scalar> &g,
                        Cascade<Scalar> const &model,
                        std::vector<nn::Bound<Scalar>> const &stages,
                        CascadeProblem<Scalar> const &problem,
                        ReconTrace *trace = nullptr);

ComplexTensor reconstruct(ComplexTensor const &y,
                          SamplingMask const &mask,
                          CoilSensitivities<float> const &sens,
                          Index contrast_id,
                          Model const &model,
                          ReconTrace *trace = nullptr);

} // namespace unrollkit
