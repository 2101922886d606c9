#pragma once

#include "cascade.hpp"
#include "metrics.hpp"
#include "phantom.hpp"

#include <functional>
#include <iosfwd>

namespace unrollkit {

enum class Method
{
  FixedUNet,
  AdaptiveUNet,
  FixedPCP,
  AdaptivePCP
};

inline constexpr Method kAllMethods[] = {Method::FixedUNet, Method::AdaptiveUNet, Method::FixedPCP,
                                         Method::AdaptivePCP};

std::string to_string(Method m);
Method parse_method(std::string const &name);

// Desk cascade for a method: routing from the Adaptive/Fixed half, regulariser from the UNet/PCP half.
CascadeConfig method_config(Method m);

struct LossWeights
{
  double alpha = 1.0; // MSE
  double beta = 0.1;  // 1 - SSIM
};

/* alpha * MSE + beta * (1 - SSIM) between the magnitudes of two-channel
 * images. `target` is [2, T, X, Y]; SSIM uses the metric window over the whole
 * frame with the target maximum as data range.
 */
template <typename Scalar>
nn::Var recon_loss(nn::Graph<Scalar> &g, nn::Var x, Tensor<Scalar> const &target, LossWeights const &w = {});

struct AdamState
{
  std::vector<nn::ParamStore<float>> m, v;
  Index step = 0;
  Index skipped = 0;
};

AdamState make_adam_state(std::vector<nn::ParamStore<float>> const &params);

/* One bias-corrected Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
 * Returns false and leaves everything untouched if any gradient is non-finite.
 */
bool adam_step(std::vector<nn::ParamStore<float>> &params,
               std::vector<nn::ParamStore<float>> const &grads,
               AdamState &state,
               double lr);

struct TrainConfig
{
  Method method = Method::AdaptivePCP;
  Index epochs = 20;
  Index batch_size = 4;
  double lr = 1e-3;
  LossWeights loss;
  double grad_clip = 1.0; // global L2 norm; 0 disables
  std::uint64_t seed = 0;
  nn::NetSpec net; // kind is overridden by the method
};

struct TrainResult
{
  Model model;
  std::vector<double> loss_history; // mean training loss per epoch
  Index skipped_steps = 0;
};

using ProgressFn = std::function<void(Index epoch, double loss)>;

TrainResult train(TrainConfig const &config, std::vector<ReconSample> const &dataset, ProgressFn progress = {});

// Loss of one sample plus parameter gradients accumulated into `grads` (if given).
double sample_loss(Model const &model, ReconSample const &s, LossWeights const &w,
                   std::vector<nn::ParamStore<float>> *grads);

struct MetricsRow
{
  std::string method;
  MaskKind kind;
  Index rate = 0;
  Index contrast = 0;
  std::uint64_t seed = 0;
  double ssim = 0, nmrse = 0;
};

struct AggregateRow
{
  std::string method, stratum;
  Index n = 0;
  double ssim_mean = 0, ssim_std = 0, nmrse_mean = 0, nmrse_std = 0;
};

struct TTestRow
{
  std::string method_a, method_b, stratum;
  TTest result; // t and p are NaN when the test is degenerate
};

struct MetricsReport
{
  std::vector<MetricsRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<TTestRow> ttests;
};

/* Reconstructs every sample with every named model. Strata are "all",
 * "kind=<k>;rate=<r>" cells and "contrast=<c>". Paired t-tests compare SSIM for
 * every method pair on "all" and on each kind.
 */
MetricsReport benchmark(std::vector<std::pair<std::string, Model>> const &models,
                        std::vector<ReconSample> const &dataset);

void write_rows_csv(std::ostream &out, std::vector<MetricsRow> const &rows);
void write_aggregates_csv(std::ostream &out, std::vector<AggregateRow> const &rows);
void write_ttests_csv(std::ostream &out, std::vector<TTestRow> const &rows);

} // namespace unrollkit
