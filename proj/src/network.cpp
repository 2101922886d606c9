#include "unrollkit/network.hpp"

#include <cmath>
#include <random>

namespace unrollkit::nn {

std::string to_string(NetKind kind)
{
  return kind == NetKind::PlainUNet ? "unet" : "pcp-unet";
}

NetKind parse_net_kind(std::string const &name)
{
  if (name == "unet") {
    return NetKind::PlainUNet;
  }
  if (name == "pcp-unet") {
    return NetKind::PCPUNet;
  }
  throw Error("unknown network kind '" + name + "'");
}

void NetSpec::validate() const
{
  if (scales < 1 || base_channels < 1 || shift_count < 0 || temporal_kernel < 1) {
    throw Error("invalid network spec: scales and channels must be >= 1");
  }
  if (kind == NetKind::PCPUNet && (prompt_count < 1 || prompt_channels < 1 || prompt_size < 1 ||
                                   contrast_dim < 1 || pattern_dim < 1)) {
    throw Error("invalid network spec: prompt dimensions must be >= 1");
  }
}

namespace {

void add_block(std::vector<std::pair<std::string, Shape>> &l, std::string const &p, Index cin, Index cout, Index kt)
{
  l.push_back({p + ".sw", {cout, cin, 3, 3}});
  l.push_back({p + ".sb", {cout}});
  l.push_back({p + ".tw", {cout, cout, kt}});
  l.push_back({p + ".tb", {cout}});
}

void add_prompt(std::vector<std::pair<std::string, Shape>> &l, NetSpec const &s, std::string const &p, Index width,
                Index emb)
{
  l.push_back({p + ".bank", {s.prompt_count, s.prompt_channels, s.prompt_size, s.prompt_size}});
  l.push_back({p + ".proj", {s.prompt_count, emb}});
  l.push_back({p + ".mix.w", {width, width + s.prompt_channels, 3, 3}});
  l.push_back({p + ".mix.b", {width}});
}

std::string level_name(char const *stem, Index level)
{
  return std::string(stem) + std::to_string(level);
}

bool ends_with(std::string const &s, std::string const &suffix)
{
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename S>
Var block(Graph<S> &g, Var h, Bound<S> const &p, std::string const &prefix)
{
  h = conv2d(g, h, p.at(prefix + ".sw"), p.at(prefix + ".sb"), 1, 1);
  h = conv1d_t(g, h, p.at(prefix + ".tw"), p.at(prefix + ".tb"));
  return relu(g, h);
}

template <typename S>
Var prompts(Graph<S> &g, Var h, Var c_emb, Var p_emb, Bound<S> const &p, Index level)
{
  h = prompt_block(g, h, c_emb, p, level_name("dec", level) + ".contrast");
  return prompt_block(g, h, p_emb, p, level_name("dec", level) + ".pattern");
}

} // namespace

std::vector<std::pair<std::string, Shape>> net_layout(NetSpec const &spec)
{
  spec.validate();
  std::vector<std::pair<std::string, Shape>> l;
  bool const pcp = spec.kind == NetKind::PCPUNet;
  Index const kt = spec.temporal_kernel;
  for (Index lv = 0; lv < spec.scales; lv++) {
    Index const cin = lv == 0 ? spec.in_channels() : spec.channels(lv - 1);
    add_block(l, level_name("enc", lv) + ".a", cin, spec.channels(lv), kt);
    add_block(l, level_name("enc", lv) + ".b", spec.channels(lv), spec.channels(lv), kt);
  }
  for (Index lv = spec.scales - 1; lv >= 0; lv--) {
    if (lv < spec.scales - 1) {
      add_block(l, level_name("dec", lv) + ".a", spec.channels(lv + 1) + spec.channels(lv), spec.channels(lv), kt);
    }
    if (pcp) {
      add_prompt(l, spec, level_name("dec", lv) + ".contrast", spec.channels(lv), spec.contrast_dim);
      add_prompt(l, spec, level_name("dec", lv) + ".pattern", spec.channels(lv), spec.pattern_dim);
    }
  }
  l.push_back({"out.w", {2, spec.channels(0), 1, 1}});
  l.push_back({"out.b", {2}});
  return l;
}

template <typename Scalar>
ParamStore<Scalar> init_net(NetSpec const &spec, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamStore<Scalar> store;
  for (auto const &[name, shape] : net_layout(spec)) {
    Tensor<Scalar> t(shape);
    if (ends_with(name, ".sw") || ends_with(name, ".mix.w")) {
      double const std = std::sqrt(2.0 / (shape[1] * shape[2] * shape[3]));
      for (Index i = 0; i < t.size(); i++) {
        t[i] = static_cast<Scalar>(std * normal(rng));
      }
    } else if (ends_with(name, ".tw")) {
      // near-identity temporal mixing
      Index const c = shape[0], k = shape[2];
      double const std = 0.1 / std::sqrt(static_cast<double>(c * k));
      for (Index i = 0; i < t.size(); i++) {
        t[i] = static_cast<Scalar>(std * normal(rng));
      }
      for (Index o = 0; o < c; o++) {
        t(o, o, k / 2) += Scalar(1);
      }
    } else if (ends_with(name, ".bank")) {
      for (Index i = 0; i < t.size(); i++) {
        t[i] = static_cast<Scalar>(0.1 * normal(rng));
      }
    } else if (ends_with(name, ".proj")) {
      for (Index i = 0; i < t.size(); i++) {
        t[i] = static_cast<Scalar>(normal(rng));
      }
    }
    store.add(name, std::move(t));
  }
  return store;
}

template <typename Scalar>
Var prompt_block(Graph<Scalar> &g, Var features, Var emb, Bound<Scalar> const &params, std::string const &prefix)
{
  auto const &f = g.value(features);
  Var const weights = softmax(g, matvec(g, params.at(prefix + ".proj"), emb));
  Var const blend = weighted_sum(g, params.at(prefix + ".bank"), weights);
  Var const resized = resize_bilinear(g, blend, f.dim(2), f.dim(3));
  Var const cat = concat_channels(g, {features, broadcast_t(g, resized, f.dim(1))});
  return conv2d(g, cat, params.at(prefix + ".mix.w"), params.at(prefix + ".mix.b"), 1, 1);
}

template <typename Scalar>
Var net_forward(Graph<Scalar> &g, NetSpec const &spec, Bound<Scalar> const &params, Var x, Var c_emb, Var p_emb)
{
  for (auto const &[name, shape] : net_layout(spec)) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw Error("net_forward: parameter '" + name + "' missing for this network spec");
    }
    if (g.value(it->second).shape() != shape) {
      throw Error("net_forward: parameter '" + name + "' has shape " + ShapeString(g.value(it->second).shape()) +
                  ", spec expects " + ShapeString(shape));
    }
  }
  auto const &X = g.value(x);
  if (X.rank() != 4 || X.dim(0) != spec.in_channels()) {
    throw Error("net_forward: input " + ShapeString(X.shape()) + " does not have " +
                std::to_string(spec.in_channels()) + " channels");
  }
  Index const factor = Index{1} << (spec.scales - 1);
  if (X.dim(2) % factor || X.dim(3) % factor) {
    throw Error("net_forward: spatial extents must be divisible by " + std::to_string(factor));
  }
  bool const pcp = spec.kind == NetKind::PCPUNet;

  std::vector<Var> skips;
  Var h = x;
  for (Index lv = 0; lv < spec.scales; lv++) {
    if (lv > 0) {
      h = downsample2x(g, h);
    }
    h = block(g, h, params, level_name("enc", lv) + ".a");
    h = block(g, h, params, level_name("enc", lv) + ".b");
    skips.push_back(h);
  }
  if (pcp) {
    h = prompts(g, h, c_emb, p_emb, params, spec.scales - 1);
  }
  for (Index lv = spec.scales - 2; lv >= 0; lv--) {
    h = concat_channels(g, {upsample2x(g, h), skips[lv]});
    h = block(g, h, params, level_name("dec", lv) + ".a");
    if (pcp) {
      h = prompts(g, h, c_emb, p_emb, params, lv);
    }
  }
  Var const delta = conv2d(g, h, params.at("out.w"), params.at("out.b"), 1, 0);
  return add(g, slice_channels(g, x, 0, 2), delta);
}

template <typename Scalar>
Tensor<Scalar> net_forward(NetSpec const &spec,
                           ParamStore<Scalar> const &params,
                           Tensor<Scalar> const &x,
                           Tensor<Scalar> const &c_emb,
                           Tensor<Scalar> const &p_emb)
{
  Graph<Scalar> g;
  auto const bound = bind(g, params, false);
  Var const out = net_forward(g, spec, bound, g.constant(x), g.constant(c_emb), g.constant(p_emb));
  return g.value(out);
}

template ParamStore<float> init_net(NetSpec const &, std::uint64_t);
template ParamStore<double> init_net(NetSpec const &, std::uint64_t);
template Var prompt_block(Graph<float> &, Var, Var, Bound<float> const &, std::string const &);
template Var prompt_block(Graph<double> &, Var, Var, Bound<double> const &, std::string const &);
template Var net_forward(Graph<float> &, NetSpec const &, Bound<float> const &, Var, Var, Var);
template Var net_forward(Graph<double> &, NetSpec const &, Bound<double> const &, Var, Var, Var);
template Tensor<float> net_forward(NetSpec const &, ParamStore<float> const &, Tensor<float> const &,
                                   Tensor<float> const &, Tensor<float> const &);
template Tensor<double> net_forward(NetSpec const &, ParamStore<double> const &, Tensor<double> const &,
                                    Tensor<double> const &, Tensor<double> const &);

} // namespace unrollkit::nn
