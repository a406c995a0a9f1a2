#include "t2v/denoiser.hpp"
#include "t2v/errors.hpp"
#include "t2v/random.hpp"
#include "t2v/verify.hpp"

#include <doctest.h>

#include <set>

using namespace t2v;

namespace {

long res_block_count(long cin, long cout, long temb)
{
  long n = 2 * cin + (cin * cout * 9 + cout) + (temb * cout + cout) + 2 * cout + (cout * cout * 9 + cout);
  if (cin != cout) { n += cin * cout + cout; }
  return n;
}

} // namespace

TEST_CASE("parameter count for the reference configuration")
{
  DenoiserConfig c;
  c.image_size = 16;
  c.base_width = 32;
  c.depth = 2;
  long const temb = c.time_embed_dim;
  long expected = 2 * (temb * temb + temb);
  expected += 4 * 32 * 9 + 32;
  expected += res_block_count(32, 32, temb) + res_block_count(32, 64, temb);
  expected += res_block_count(64, 96, temb);
  expected += res_block_count(160, 64, temb) + res_block_count(96, 32, temb);
  expected += 2 * 32 + (32 * 3 * 9 + 3);
  CHECK(expected == 430691);
  CHECK(init_params(c).total_elements() == 430691);
}

TEST_CASE("parameter names are unique")
{
  DenoiserParams const p = init_params(DenoiserConfig{});
  std::set<std::string> const names(p.names.begin(), p.names.end());
  CHECK(names.size() == p.names.size());
  CHECK_THROWS_AS(p["missing"], IndexError);
}

TEST_CASE("initialization is deterministic")
{
  DenoiserConfig c;
  c.seed = 42;
  DenoiserParams const a = init_params(c);
  DenoiserParams const b = init_params(c);
  for (std::size_t i = 0; i < a.size(); ++i) { CHECK((a.tensors[i].data() == b.tensors[i].data()).all()); }
  c.seed = 43;
  CHECK_FALSE((init_params(c)["in.weight"].data() == a["in.weight"].data()).all());
  CHECK((a["out.weight"].data() == 0.0f).all());
}

TEST_CASE("config validation")
{
  DenoiserConfig c;
  c.image_size = 18;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = DenoiserConfig{};
  c.base_width = 30;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = DenoiserConfig{};
  c.time_embed_dim = 7;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_NOTHROW(validate(DenoiserConfig{}));
}

TEST_CASE("time embedding")
{
  Eigen::VectorXd const zero = time_embedding(0, 64);
  CHECK((zero.head(32).array() == 0.0).all());
  CHECK((zero.tail(32).array() == 1.0).all());
  std::vector<Eigen::VectorXd> all;
  for (int t = 0; t < 1000; ++t) {
    all.push_back(time_embedding(t, 64));
    CHECK(all.back().cwiseAbs().maxCoeff() <= 1.0);
  }
  double min_dist = 1e9;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) { min_dist = std::min(min_dist, (all[i] - all[j]).norm()); }
  CHECK(min_dist > 0.0);
  CHECK_THROWS_AS(time_embedding(1, 7), RangeError);
}

TEST_CASE("untrained denoiser predicts zero")
{
  DenoiserConfig c;
  c.base_width = 16;
  DenoiserParams const p = init_params(c);
  Rng rng(1);
  TensorF const x = randn<float>(Shape{3, 3, 16, 16}, rng);
  TensorF const y = randn<float>(Shape{3, 1, 16, 16}, rng);
  std::vector<int> const t{1, 500, 1000};
  TensorF const out = eps_theta(c, p, x, y, t);
  CHECK(out.shape() == x.shape());
  CHECK((out.data() == 0.0f).all());
}

TEST_CASE("forward is deterministic and batch independent")
{
  DenoiserConfig const c = tiny_config();
  ParamSet<float> p = init_params(c);
  Rng rng(2);
  for (auto &t : p.tensors) { t.data() += randn<float>(t.shape(), rng).data() * 0.1f; }
  TensorF const x = randn<float>(Shape{2, 3, 8, 8}, rng);
  TensorF const y = randn<float>(Shape{2, 1, 8, 8}, rng);
  std::vector<int> const t{5, 700};
  TensorF const a = eps_theta(c, p, x, y, t);
  TensorF const b = eps_theta(c, p, x, y, t);
  CHECK((a.data() == b.data()).all());
  CHECK(a.data().abs().maxCoeff() > 0.0f);
  std::vector<int> const t1{700};
  TensorF const single = eps_theta(c, p, x.sample(1), y.sample(1), t1);
  CHECK((single.data() - a.sample(1).data()).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("forward rejects bad inputs")
{
  DenoiserConfig const c = tiny_config();
  DenoiserParams const p = init_params(c);
  std::vector<int> const t{1};
  CHECK_THROWS_AS(eps_theta(c, p, TensorF(Shape{1, 3, 8, 8}), TensorF(Shape{1, 2, 8, 8}), t), ShapeError);
  CHECK_THROWS_AS(eps_theta(c, p, TensorF(Shape{1, 3, 4, 4}), TensorF(Shape{1, 1, 4, 4}), t), ShapeError);
  std::vector<int> const two{1, 2};
  CHECK_THROWS_AS(eps_theta(c, p, TensorF(Shape{1, 3, 8, 8}), TensorF(Shape{1, 1, 8, 8}), two), ShapeError);
}

TEST_CASE("denoiser gradients match finite differences")
{
  GradientCheck const g = gradient_check(tiny_config(), 17);
  CHECK(g.checked == init_params(tiny_config()).total_elements());
  CHECK(g.max_relative_error < 1e-5);
}
