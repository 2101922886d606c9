#pragma once

#include "param_store.hpp"

namespace unrollkit::nn {

enum class NetKind
{
  PlainUNet,
  PCPUNet
};

std::string to_string(NetKind kind);
NetKind parse_net_kind(std::string const &name);

struct NetSpec
{
  NetKind kind = NetKind::PCPUNet;
  Index scales = 2;
  Index base_channels = 8;
  Index contrast_dim = 8;
  Index pattern_dim = 17;
  Index shift_count = 3;
  Index prompt_count = 4;    // K prompt maps per bank
  Index prompt_channels = 4; // channels per prompt map
  Index prompt_size = 8;     // prompt maps are prompt_size x prompt_size
  Index temporal_kernel = 3;

  Index in_channels() const { return 2 * (1 + shift_count); }
  Index channels(Index level) const { return base_channels << level; }
  void validate() const;

  friend bool operator==(NetSpec const &, NetSpec const &) = default;
};

/* Deterministic initialisation. The output projection is zero so the
 * untrained network returns its first two input channels.
 */
template <typename Scalar>
ParamStore<Scalar> init_net(NetSpec const &spec, std::uint64_t seed);

/* Conditioning pathway: softmax(proj * emb) weights K prompt maps, the blend
 * is resized to the feature grid, broadcast over frames, concatenated to the
 * features and mixed back to the feature width by a 3x3 convolution.
 * Expects `<prefix>.bank` [K, k_ch, h, w], `<prefix>.proj` [K, len(emb)],
 * `<prefix>.mix.w`, `<prefix>.mix.b`.
 */
template <typename Scalar>
Var prompt_block(Graph<Scalar> &g, Var features, Var emb, Bound<Scalar> const &params, std::string const &prefix);

/* Encoder-decoder with skip connections and 2.5D blocks (3x3 spatial conv,
 * circular temporal conv, ReLU). In PCP mode each decoder scale (the
 * bottleneck included) gets a contrast and a pattern prompt block. Residual:
 * returns x[0:2] + delta.
 *   x     [2 * (1 + shift_count), T, X, Y]
 *   c_emb [contrast_dim], p_emb [pattern_dim] (ignored by PlainUNet)
 */
template <typename Scalar>
Var net_forward(Graph<Scalar> &g, NetSpec const &spec, Bound<Scalar> const &params, Var x, Var c_emb, Var p_emb);

template <typename Scalar>
Tensor<Scalar> net_forward(NetSpec const &spec,
                           ParamStore<Scalar> const &params,
                           Tensor<Scalar> const &x,
                           Tensor<Scalar> const &c_emb,
                           Tensor<Scalar> const &p_emb);

// Every parameter name net_forward will read, with its shape.
std::vector<std::pair<std::string, Shape>> net_layout(NetSpec const &spec);

} // namespace unrollkit::nn
