#include "layer_checks.hpp"
#include "testutil.hpp"

#include <doctest.h>

using namespace unrollkit;
using namespace unrollkit::nn;
using testutil::random_real;

TEST_CASE("every layer passes a finite-difference check")
{
  for (auto const &c : gradcheck::layer_cases()) {
    CAPTURE(c.name);
    auto const r = gradcheck::check(c.fn, c.inputs);
    CHECK(r.checked > 0);
    CHECK(r.rel_error < 1e-4);
  }
}

TEST_CASE("whole networks pass a finite-difference check")
{
  for (auto kind : {NetKind::PlainUNet, NetKind::PCPUNet}) {
    auto const c = gradcheck::network_case(kind);
    CAPTURE(c.name);
    auto const r = gradcheck::check(c.fn, c.inputs, 1e-5, 16);
    CHECK(r.rel_error < 1e-3);
  }
}

TEST_CASE("conv2d hand cases")
{
  Graph<double> g;
  auto const x = random_real<double>({1, 2, 5, 5}, 1);
  Var const xv = g.constant(x);
  Var const id = conv2d(g, xv, g.constant(Tensor<double>::Constant({1, 1, 1, 1}, 1.0)), g.constant(Tensor<double>({1})));
  CHECK(g.value(id) == x);

  Var const ones =
    conv2d(g, g.constant(Tensor<double>::Constant({1, 1, 5, 5}, 2.0)), g.constant(Tensor<double>::Constant({1, 1, 3, 3}, 1.0)),
           g.constant(Tensor<double>({1})), 1, 1);
  CHECK(g.value(ones)(0, 0, 2, 2) == 18.0);
  CHECK(g.value(ones)(0, 0, 0, 0) == 8.0);
  CHECK(g.value(ones).shape() == Shape{1, 1, 5, 5});

  CHECK_THROWS_AS(conv2d(g, xv, g.constant(Tensor<double>({1, 2, 3, 3})), g.constant(Tensor<double>({1}))), Error);
  CHECK_THROWS_AS(conv2d(g, xv, g.constant(Tensor<double>({1, 1, 7, 7})), g.constant(Tensor<double>({1}))), Error);
}

TEST_CASE("temporal convolution wraps around the cycle")
{
  Graph<double> g;
  Tensor<double> x({1, 3, 1, 1});
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  Var const xv = g.constant(x);
  Var const b = g.constant(Tensor<double>({1}));
  Tensor<double> w({1, 1, 3});
  w[1] = 1;
  CHECK(g.value(conv1d_t(g, xv, g.constant(w), b)) == x);

  // tap 0 reads frame t - 1: [a, b, c] -> [c, a, b]
  w.setZero();
  w[0] = 1;
  auto const shifted = g.value(conv1d_t(g, xv, g.constant(w), b));
  CHECK(shifted[0] == 3);
  CHECK(shifted[1] == 1);
  CHECK(shifted[2] == 2);

  CHECK_THROWS_AS(conv1d_t(g, xv, g.constant(Tensor<double>({1, 1, 7})), b), Error);
}

TEST_CASE("pointwise and resampling layers")
{
  Graph<double> g;
  Tensor<double> v({2});
  v[0] = -1;
  v[1] = 2;
  auto const r = g.value(relu(g, g.constant(v)));
  CHECK(r[0] == 0);
  CHECK(r[1] == 2);

  auto const c = Tensor<double>::Constant({2, 1, 4, 6}, 0.75);
  CHECK(g.value(upsample2x(g, downsample2x(g, g.constant(c)))) == c);
  CHECK_THROWS_AS(downsample2x(g, g.constant(Tensor<double>({1, 1, 3, 4}))), Error);

  Var const cat = concat_channels(g, {g.constant(Tensor<double>({2, 3, 4})), g.constant(Tensor<double>({3, 3, 4}))});
  CHECK(g.value(cat).shape() == Shape{5, 3, 4});
  CHECK_THROWS_AS(concat_channels(g, {g.constant(Tensor<double>({2, 3, 4})), g.constant(Tensor<double>({2, 4, 3}))}),
                  Error);
}

TEST_CASE("gradients only reach nodes that need them")
{
  Graph<double> g;
  Var const a = g.parameter(Tensor<double>::Constant({3}, 2.0));
  Var const k = g.constant(Tensor<double>::Constant({3}, 5.0));
  Var const loss = sum(g, mul(g, a, k));
  g.backward(loss);
  CHECK(g.grad(a)[1] == 5.0);
  CHECK_FALSE(g.has_grad(k));
  CHECK_THROWS_AS(g.backward(a), Error);
}

TEST_CASE("prompt block")
{
  Graph<double> g;
  auto const feat = random_real<double>({4, 2, 6, 6}, 3);
  Bound<double> b{{"p.bank", g.constant(random_real<double>({1, 2, 4, 4}, 4))},
                  {"p.proj", g.constant(random_real<double>({1, 5}, 5))},
                  {"p.mix.w", g.constant(random_real<double>({4, 6, 3, 3}, 6))},
                  {"p.mix.b", g.constant(Tensor<double>({4}))}};
  // a single prompt map gets weight 1 whatever the embedding
  Var const w1 = softmax(g, matvec(g, b.at("p.proj"), g.constant(random_real<double>({5}, 7))));
  CHECK(g.value(w1)[0] == 1.0);
  Var const out1 = prompt_block(g, g.constant(feat), g.constant(random_real<double>({5}, 8)), b, "p");
  Var const out2 = prompt_block(g, g.constant(feat), g.constant(random_real<double>({5}, 9)), b, "p");
  CHECK(g.value(out1).shape() == feat.shape());
  CHECK(g.value(out1) == g.value(out2));
  CHECK_THROWS_AS(prompt_block(g, g.constant(feat), g.constant(Tensor<double>({4})), b, "p"), Error);
}

TEST_CASE("network contracts")
{
  NetSpec spec;
  spec.kind = NetKind::PCPUNet;
  auto const params = init_net<float>(spec, 1);
  CHECK(params.count() <= 200000);
  CHECK(init_net<float>(spec, 1) == params);
  CHECK(params.contains("dec0.pattern.bank"));
  CHECK(params.contains("dec1.contrast.proj"));

  auto const x = random_real({spec.in_channels(), 3, 8, 8}, 10);
  auto const c = random_real({spec.contrast_dim}, 11);
  auto const p = random_real({spec.pattern_dim}, 12);
  auto const out = net_forward(spec, params, x, c, p);
  CHECK(out.shape() == Shape{2, 3, 8, 8});
  // the zero output projection makes the untrained network an identity on the first two channels
  CHECK(out.vec() == x.vec().head(out.size()));

  auto trained = params;
  trained.at("out.w").vec() = random_real(trained.at("out.w").shape(), 13).vec();
  auto const o1 = net_forward(spec, trained, x, c, p);
  CHECK(o1 == net_forward(spec, trained, x, c, p));
  CHECK_FALSE(o1 == net_forward(spec, trained, x, random_real({spec.contrast_dim}, 14), p));

  NetSpec plain = spec;
  plain.kind = NetKind::PlainUNet;
  auto pp = init_net<float>(plain, 2);
  CHECK_FALSE(pp.contains("dec0.pattern.bank"));
  pp.at("out.w").vec() = random_real(pp.at("out.w").shape(), 15).vec();
  auto const a = net_forward(plain, pp, x, c, p);
  auto const b = net_forward(plain, pp, x, random_real({spec.contrast_dim}, 16), random_real({spec.pattern_dim}, 17));
  CHECK(a == b);

  CHECK_THROWS_AS(net_forward(spec, pp, x, c, p), Error);
  CHECK_THROWS_AS(net_forward(spec, params, random_real({2, 3, 8, 8}, 18), c, p), Error);
  CHECK_THROWS_AS(net_forward(spec, params, random_real({spec.in_channels(), 3, 6, 7}, 18), c, p), Error);
}

TEST_CASE("network spec validation")
{
  NetSpec s;
  s.scales = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK(parse_net_kind(to_string(NetKind::PCPUNet)) == NetKind::PCPUNet);
  CHECK_THROWS_AS(parse_net_kind("transformer"), Error);
}
