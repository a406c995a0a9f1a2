#include "t2v/adam.hpp"
#include "t2v/autodiff.hpp"
#include "t2v/random.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace t2v;

namespace {

TensorD naive_conv(TensorD const &x, TensorD const &k, TensorD const &b, int stride, int pad)
{
  Shape const si = x.shape();
  Shape const sk = k.shape();
  int const ho = (si.h + 2 * pad - sk.h) / stride + 1;
  int const wo = (si.w + 2 * pad - sk.w) / stride + 1;
  TensorD out(Shape{si.n, sk.n, ho, wo});
  for (int n = 0; n < si.n; ++n)
    for (int o = 0; o < sk.n; ++o)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          double acc = b[o];
          for (int c = 0; c < si.c; ++c)
            for (int i = 0; i < sk.h; ++i)
              for (int j = 0; j < sk.w; ++j) {
                int const yy = y * stride + i - pad;
                int const xi = xx * stride + j - pad;
                if (yy >= 0 && yy < si.h && xi >= 0 && xi < si.w) { acc += x(n, c, yy, xi) * k(o, c, i, j); }
              }
          out(n, o, y, xx) = acc;
        }
  return out;
}

// Central-difference check of d(sum(w * f(inputs)))/d(input) for every input.
using Build = std::function<Var<double>(Tape<double> &, std::vector<Var<double>> const &)>;

double max_grad_error(std::vector<TensorD> inputs, Build const &build, Rng &rng)
{
  TensorD weights;
  auto value = [&](std::vector<TensorD> const &in) {
    Tape<double> tape(false);
    std::vector<Var<double>> vars;
    for (auto const &t : in) { vars.push_back(tape.leaf(t)); }
    Var<double> const out = build(tape, vars);
    if (weights.size() == 0) { weights = randn<double>(out.shape(), rng); }
    return (out.value().data() * weights.data()).sum();
  };
  value(inputs);

  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (auto const &t : inputs) { vars.push_back(tape.leaf(t, true)); }
  Var<double> const out = build(tape, vars);
  Var<double> const loss = sum(mul(out, tape.leaf(weights)));
  tape.backward(loss);

  double worst = 0.0;
  double const h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    TensorD const analytic = tape.grad_or_zero(vars[k].id);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      double const saved = inputs[k][i];
      inputs[k][i] = saved + h;
      double const up = value(inputs);
      inputs[k][i] = saved - h;
      double const down = value(inputs);
      inputs[k][i] = saved;
      double const numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic[i]) / std::max({1.0, std::abs(numeric), std::abs(analytic[i])}));
    }
  }
  return worst;
}

} // namespace

TEST_CASE("conv2d fixed cases")
{
  Tape<double> tape(false);
  Rng rng(1);
  TensorD const x = randn<double>(Shape{2, 3, 4, 5}, rng);
  TensorD eye(Shape{3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) { eye(c, c, 0, 0) = 1.0; }
  Var<double> const same = conv2d(tape.leaf(x), tape.leaf(eye), tape.leaf(TensorD(Shape{3})));
  CHECK((same.value().data() - x.data()).abs().maxCoeff() == 0.0);

  Var<double> const nine = conv2d(tape.leaf(TensorD::constant(Shape{1, 1, 3, 3}, 1.0)),
                                  tape.leaf(TensorD::constant(Shape{1, 1, 3, 3}, 1.0)), tape.leaf(TensorD(Shape{1})));
  CHECK(nine.shape() == Shape{1, 1, 1, 1});
  CHECK(nine.value()[0] == 9.0);
}

TEST_CASE("conv2d matches nested-loop reference")
{
  Rng rng(2);
  TensorD const x = randn<double>(Shape{1, 1, 5, 5}, rng);
  TensorD const k = randn<double>(Shape{1, 1, 3, 3}, rng);
  TensorD const b = randn<double>(Shape{1}, rng);
  Tape<double> tape(false);
  Var<double> const y = conv2d(tape.leaf(x), tape.leaf(k), tape.leaf(b), 1, 0);
  CHECK((y.value().data() - naive_conv(x, k, b, 1, 0).data()).abs().maxCoeff() < 1e-6);

  std::uniform_int_distribution<int> dim(1, 8);
  for (int trial = 0; trial < 40; ++trial) {
    int const ks = std::uniform_int_distribution<int>(0, 1)(rng) ? 3 : 1;
    int const pad = ks == 3 ? std::uniform_int_distribution<int>(0, 1)(rng) : 0;
    int const stride = std::uniform_int_distribution<int>(1, 2)(rng);
    Shape const si{dim(rng) % 3 + 1, dim(rng), std::max(ks, dim(rng)), std::max(ks, dim(rng))};
    TensorD const xi = randn<double>(si, rng);
    TensorD const ki = randn<double>(Shape{dim(rng), si.c, ks, ks}, rng);
    TensorD const bi = randn<double>(Shape{ki.shape().n}, rng);
    Tape<double> t(false);
    Var<double> const out = conv2d(t.leaf(xi), t.leaf(ki), t.leaf(bi), stride, pad);
    TensorD const ref = naive_conv(xi, ki, bi, stride, pad);
    REQUIRE(out.shape() == ref.shape());
    CHECK((out.value().data() - ref.data()).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("conv2d shape errors")
{
  Tape<double> tape(false);
  auto x = tape.leaf(TensorD(Shape{1, 2, 4, 4}));
  CHECK_THROWS_AS(conv2d(x, tape.leaf(TensorD(Shape{1, 3, 3, 3})), tape.leaf(TensorD(Shape{1}))), ShapeError);
  CHECK_THROWS_AS(conv2d(x, tape.leaf(TensorD(Shape{1, 2, 3, 3})), tape.leaf(TensorD(Shape{2}))), ShapeError);
  CHECK_THROWS_AS(conv2d(x, tape.leaf(TensorD(Shape{1, 2, 5, 5})), tape.leaf(TensorD(Shape{1}))), ShapeError);
}

TEST_CASE("elementwise ops")
{
  Tape<double> tape(false);
  CHECK(silu(tape.leaf(TensorD(Shape{1}))).value()[0] == 0.0);
  Var<double> const cat = concat_channels(tape.leaf(TensorD(Shape{1, 3, 8, 8})), tape.leaf(TensorD(Shape{1, 1, 8, 8})));
  CHECK(cat.shape() == Shape{1, 4, 8, 8});
  CHECK_THROWS_AS(concat_channels(tape.leaf(TensorD(Shape{1, 3, 8, 8})), tape.leaf(TensorD(Shape{1, 1, 4, 4}))), ShapeError);
  CHECK_THROWS_AS(add(tape.leaf(TensorD(Shape{2})), tape.leaf(TensorD(Shape{3}))), ShapeError);

  TensorD const x(Shape{1, 1, 2, 2}, (Eigen::ArrayXd(4) << 1, 2, 3, 4).finished());
  Var<double> const up = nearest_upsample(tape.leaf(x));
  CHECK(up.shape() == Shape{1, 1, 4, 4});
  CHECK(up.value()(0, 0, 1, 1) == 1.0);
  CHECK(up.value()(0, 0, 3, 2) == 4.0);
  Var<double> const down = average_downsample(up);
  CHECK((down.value().data() - x.data()).abs().maxCoeff() == 0.0);
  Var<double> const mean = average_downsample(tape.leaf(x));
  CHECK(mean.value()[0] == 2.5);
}

TEST_CASE("group normalization statistics")
{
  Rng rng(3);
  TensorD x = randn<double>(Shape{2, 8, 4, 4}, rng);
  x.data() = x.data() * 3.0 + 5.0;
  Tape<double> tape(false);
  Var<double> const y = group_normalize(tape.leaf(x), tape.leaf(TensorD::constant(Shape{8}, 1.0)), tape.leaf(TensorD(Shape{8})), 4);
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < 4; ++g) {
      Eigen::ArrayXd const block = y.value().data().segment(n * 128 + g * 32, 32);
      double const mu = block.mean();
      CHECK(std::abs(mu) < 1e-6);
      CHECK(std::abs((block - mu).square().mean() - 1.0) < 1e-5);
    }
  CHECK_THROWS_AS(group_normalize(tape.leaf(x), tape.leaf(TensorD(Shape{8})), tape.leaf(TensorD(Shape{8})), 3), ShapeError);
}

TEST_CASE("mse loss")
{
  Rng rng(4);
  TensorD const a = randn<double>(Shape{2, 3, 4, 4}, rng);
  Tape<double> tape(false);
  CHECK(mse_loss(tape.leaf(a), tape.leaf(a)).value()[0] == 0.0);
  TensorD shifted(a.shape(), a.data() + 2.0);
  CHECK(mse_loss(tape.leaf(shifted), tape.leaf(a)).value()[0] == doctest::Approx(4.0).epsilon(1e-14));

  TensorD const b = randn<double>(a.shape(), rng);
  double fold = 0.0;
  for (Eigen::Index i = a.size() - 1; i >= 0; --i) { fold += (a[i] - b[i]) * (a[i] - b[i]); }
  CHECK(mse_loss(tape.leaf(a), tape.leaf(b)).value()[0] == doctest::Approx(fold / a.size()).epsilon(1e-12));
}

TEST_CASE("backward basics")
{
  Tape<double> tape;
  Var<double> const w = tape.leaf(TensorD(Shape{2, 3, 2, 2}), true);
  tape.backward(sum(w));
  CHECK((tape.grad(w.id).data() == 1.0).all());

  Tape<double> t2;
  Var<double> const ws = t2.leaf(TensorD::constant(Shape{1}, 0.7), true);
  TensorD const x = TensorD::constant(Shape{1}, 1.3);
  TensorD const y = TensorD::constant(Shape{1}, -0.4);
  t2.backward(mse_loss(mul(ws, t2.leaf(x)), t2.leaf(y)));
  CHECK(t2.grad(ws.id)[0] == doctest::Approx(2 * 1.3 * (0.7 * 1.3 + 0.4)).epsilon(1e-14));

  Tape<double> t3;
  Var<double> const v = t3.leaf(TensorD(Shape{3}), true);
  CHECK_THROWS_AS(t3.backward(v), ShapeError);
}

TEST_CASE("non-recording tape keeps no gradients")
{
  Tape<double> tape(false);
  Var<double> const w = tape.leaf(TensorD::constant(Shape{2}, 1.0), true);
  CHECK_FALSE(w.requires_grad());
  CHECK_FALSE(silu(w).requires_grad());
}

TEST_CASE("op gradients match finite differences")
{
  Rng rng(5);
  auto r = [&](Shape s) { return randn<double>(s, rng); };
  CHECK(max_grad_error({r({2, 3, 2, 2}), r({2, 3, 2, 2})}, [](auto &, auto const &v) { return add(v[0], v[1]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 2, 2}), r({2, 3, 2, 2})}, [](auto &, auto const &v) { return mul(v[0], v[1]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 2, 2})}, [](auto &, auto const &v) { return scale(v[0], -1.7); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 2, 2})}, [](auto &, auto const &v) { return silu(v[0]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 2, 2}), r({2, 3, 2, 2})}, [](auto &, auto const &v) { return mse_loss(v[0], v[1]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 4, 4}), r({2, 1, 4, 4})}, [](auto &, auto const &v) { return concat_channels(v[0], v[1]); }, rng) <
        1e-7);
  CHECK(max_grad_error({r({2, 3, 2, 2}), r({2, 3, 1, 1})}, [](auto &, auto const &v) { return add_channel_bias(v[0], v[1]); }, rng) <
        1e-7);
  CHECK(max_grad_error({r({3, 5, 1, 1}), r({4, 5, 1, 1}), r({4, 1, 1, 1})},
                       [](auto &, auto const &v) { return linear(v[0], v[1], v[2]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 5, 5}), r({4, 3, 3, 3}), r({4, 1, 1, 1})},
                       [](auto &, auto const &v) { return conv2d(v[0], v[1], v[2], 1, 1); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 5, 5}), r({2, 3, 3, 3}), r({2, 1, 1, 1})},
                       [](auto &, auto const &v) { return conv2d(v[0], v[1], v[2], 2, 1); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 3, 4, 4}), r({5, 3, 1, 1}), r({5, 1, 1, 1})},
                       [](auto &, auto const &v) { return conv2d(v[0], v[1], v[2]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 4, 3, 3}), r({4, 1, 1, 1}), r({4, 1, 1, 1})},
                       [](auto &, auto const &v) { return group_normalize(v[0], v[1], v[2], 2); }, rng) < 1e-6);
  CHECK(max_grad_error({r({2, 2, 3, 3})}, [](auto &, auto const &v) { return nearest_upsample(v[0]); }, rng) < 1e-7);
  CHECK(max_grad_error({r({2, 2, 4, 4})}, [](auto &, auto const &v) { return average_downsample(v[0]); }, rng) < 1e-7);
}

TEST_CASE("adam")
{
  AdamConfig cfg;
  cfg.lr = 0.01;

  SUBCASE("zero gradient leaves parameters and decays moments")
  {
    std::vector<TensorD> p{TensorD::constant(Shape{3}, 2.0)};
    std::vector<TensorD> g{TensorD::constant(Shape{3}, 1.0)};
    AdamState<double> state;
    adam_step<double>(p, g, state, cfg);
    TensorD const before = p[0];
    double const m = state.first_moment[0][0];
    g[0].data().setZero();
    adam_step<double>(p, g, state, cfg);
    CHECK(state.first_moment[0][0] == doctest::Approx(0.9 * m));
    CHECK(std::abs(p[0][0] - before[0]) < cfg.lr);
    AdamState<double> fresh;
    std::vector<TensorD> q{TensorD::constant(Shape{3}, 2.0)};
    adam_step<double>(q, g, fresh, cfg);
    CHECK((q[0].data() == 2.0).all());
  }
  SUBCASE("first step moves by lr")
  {
    std::vector<TensorD> p{TensorD(Shape{2})};
    std::vector<TensorD> g{TensorD::constant(Shape{2}, 0.37)};
    AdamState<double> state;
    adam_step<double>(p, g, state, cfg);
    CHECK(p[0][0] == doctest::Approx(-cfg.lr).epsilon(1e-6));
  }
  SUBCASE("quadratic descent")
  {
    AdamConfig c;
    c.lr = 0.1;
    std::vector<TensorD> w{TensorD(Shape{1})};
    AdamState<double> state;
    for (int i = 0; i < 100; ++i) {
      std::vector<TensorD> g{TensorD::constant(Shape{1}, 2.0 * (w[0][0] - 3.0))};
      adam_step<double>(w, g, state, c);
    }
    CHECK(std::abs(w[0][0] - 3.0) < 0.5);
  }
  SUBCASE("mismatched sizes")
  {
    std::vector<TensorD> p{TensorD(Shape{2})};
    std::vector<TensorD> g;
    AdamState<double> state;
    CHECK_THROWS_AS(adam_step<double>(p, g, state, cfg), ShapeError);
  }
}
