#include "t2v/diffusion.hpp"
#include "t2v/oracle.hpp"
#include "t2v/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace t2v;

namespace {

NoiseSchedule const &full_schedule()
{
  static NoiseSchedule const s = linear_schedule(1000, 1e-4, 0.02);
  return s;
}

class ZeroPredictor : public NoisePredictor<double>
{
public:
  TensorD predict(TensorD const &x, TensorD const &, std::span<int const>) const override { return TensorD(x.shape()); }
};

} // namespace

TEST_CASE("q_sample limiting cases")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(1);
  TensorD const x0 = randn<double>(Shape{2, 3, 4, 4}, rng);
  TensorD const eps = randn<double>(x0.shape(), rng);
  TensorD const zero(x0.shape());
  for (int t : {0, 1, 250, 1000}) {
    TensorD const a = q_sample(x0, t, zero, s);
    CHECK((a.data() - x0.data() * std::sqrt(s.alpha_bar(t))).abs().maxCoeff() < 1e-15);
    TensorD const b = q_sample(zero, t, eps, s);
    CHECK((b.data() - eps.data() * std::sqrt(1.0 - s.alpha_bar(t))).abs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(q_sample(x0, 1001, eps, s), IndexError);
  CHECK_THROWS_AS(q_sample(x0, -1, eps, s), IndexError);
  CHECK_THROWS_AS(q_sample(x0, 3, TensorD(Shape{1, 3, 4, 4}), s), ShapeError);
}

TEST_CASE("per-sample q_sample matches the single-step form")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(2);
  TensorD const x0 = randn<double>(Shape{3, 1, 2, 2}, rng);
  TensorD const eps = randn<double>(x0.shape(), rng);
  std::vector<int> const ts{1, 400, 1000};
  TensorD const batched = q_sample(x0, std::span<int const>(ts), eps, s);
  for (int n = 0; n < 3; ++n) {
    TensorD const one = q_sample(x0.sample(n), ts[n], eps.sample(n), s);
    CHECK((one.data() - batched.sample(n).data()).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("iterated single steps reproduce the closed-form marginal")
{
  NoiseSchedule const &s = full_schedule();
  int const samples = 10000;
  int const t = 10;
  double const x0 = 0.7;
  Rng rng(3);
  std::normal_distribution<double> normal;
  Eigen::ArrayXd x = Eigen::ArrayXd::Constant(samples, x0);
  for (int k = 1; k <= t; ++k) {
    for (int i = 0; i < samples; ++i) { x[i] = std::sqrt(1.0 - s.beta(k)) * x[i] + std::sqrt(s.beta(k)) * normal(rng); }
  }
  double const ab = s.alpha_bar(t);
  double const mean = x.mean();
  double const var = (x - mean).square().sum() / (samples - 1);
  CHECK(std::abs(mean - std::sqrt(ab) * x0) < 3.0 * std::sqrt((1.0 - ab) / samples));
  CHECK(std::abs(var - (1.0 - ab)) < 3.0 * (1.0 - ab) * std::sqrt(2.0 / (samples - 1)));
}

TEST_CASE("predict_x0_from_eps inverts q_sample")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(4);
  TensorF const x0 = randn<float>(Shape{2, 3, 8, 8}, rng);
  TensorF const eps = randn<float>(x0.shape(), rng);
  for (int t : {1, 10, 100, 500, 900}) {
    TensorF const back = predict_x0_from_eps(q_sample(x0, t, eps, s), t, eps, s);
    CHECK((back.data() - x0.data()).abs().maxCoeff() < 1e-5f);
  }
  TensorD const xd = randn<double>(Shape{1, 3, 4, 4}, rng);
  TensorD const ed = randn<double>(xd.shape(), rng);
  int const t = 321;
  TensorD const xt = q_sample(xd, t, ed, s);
  TensorD const rec = predict_x0_from_eps(xt, t, ed, s);
  for (Eigen::Index i = 0; i < xd.size(); ++i) {
    double const direct = (xt[i] - std::sqrt(1.0 - s.alpha_bar(t)) * ed[i]) / std::sqrt(s.alpha_bar(t));
    CHECK(std::abs(rec[i] - direct) < 1e-10);
  }
  TensorD const scaled(xd.shape(), xd.data() * std::sqrt(s.alpha_bar(t)));
  CHECK((predict_x0_from_eps(scaled, t, TensorD(xd.shape()), s).data() - xd.data()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("predict_x0_from_eps rejects vanishing alpha bar")
{
  NoiseSchedule const s = schedule_from_betas(std::vector<double>(40, 0.999));
  CHECK_THROWS_AS(predict_x0_from_eps(TensorD(Shape{1}), 40, TensorD(Shape{1}), s), RangeError);
}

TEST_CASE("posterior moments")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(5);
  std::uniform_int_distribution<int> pick(1, 1000);
  for (int trial = 0; trial < 1000; ++trial) {
    int const t = pick(rng);
    TensorD const x0 = randn<double>(Shape{1, 3, 2, 2}, rng);
    TensorD const xt = randn<double>(x0.shape(), rng);
    double const ab = s.alpha_bar(t);
    TensorD const eps(x0.shape(), (xt.data() - std::sqrt(ab) * x0.data()) / std::sqrt(1.0 - ab));
    PosteriorMoments<double> const q = posterior_moments(x0, xt, t, s);
    TensorD const reparam(x0.shape(), (xt.data() - s.beta(t) / std::sqrt(1.0 - ab) * eps.data()) / std::sqrt(s.alpha(t)));
    CHECK((q.mean.data() - reparam.data()).abs().maxCoeff() < 1e-6);
    CHECK((reverse_mean(xt, eps, t, s).data() - reparam.data()).abs().maxCoeff() < 1e-12);
    CHECK(q.variance == s.posterior_variance(t));
  }
  TensorD const zero(Shape{1, 1, 2, 2});
  CHECK((posterior_moments(zero, zero, 17, s).mean.data() == 0.0).all());
  CHECK(posterior_moments(zero, zero, 1, s).variance == s.beta(1));
  CHECK_THROWS_AS(posterior_moments(zero, zero, 0, s), IndexError);
}

TEST_CASE("reverse variance modes")
{
  NoiseSchedule const &s = full_schedule();
  CHECK(reverse_variance(s, 500, VarianceMode::Beta) == s.beta(500));
  CHECK(reverse_variance(s, 500, VarianceMode::Posterior) == s.posterior_variance(500));
}

TEST_CASE("training loss of the zero predictor is the noise energy")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(6);
  TensorD const x0 = randn<double>(Shape{4, 3, 4, 4}, rng);
  TensorD const y(Shape{4, 1, 4, 4});
  TensorD const eps = randn<double>(x0.shape(), rng);
  std::vector<int> const ts{3, 30, 300, 1000};
  double const loss = training_loss(ZeroPredictor{}, x0, y, ts, eps, s);
  CHECK(loss == doctest::Approx(eps.data().square().mean()).epsilon(1e-14));
}

TEST_CASE("training loss is invariant to batch order")
{
  NoiseSchedule const &s = full_schedule();
  Rng rng(7);
  GaussianData<double> data{randn<double>(Shape{1, 3, 2, 2}, rng), 0.6};
  GaussianOracle<double> oracle(data, s);
  TensorD const x0 = randn<double>(Shape{3, 3, 2, 2}, rng);
  TensorD const eps = randn<double>(x0.shape(), rng);
  TensorD const y(Shape{3, 1, 2, 2});
  std::vector<int> const ts{5, 50, 500};
  double const forward = training_loss(oracle, x0, y, ts, eps, s);
  std::vector<int> const perm{2, 0, 1};
  std::vector<TensorD> xs, es;
  std::vector<int> pts;
  for (int i : perm) {
    xs.push_back(x0.sample(i));
    es.push_back(eps.sample(i));
    pts.push_back(ts[i]);
  }
  double const shuffled = training_loss(oracle, stack_batch<double>(xs), y, pts, stack_batch<double>(es), s);
  CHECK(shuffled == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("ideal predictor attains the residual variance")
{
  NoiseSchedule const &s = full_schedule();
  double const sigma = 0.5;
  Rng rng(8);
  GaussianData<double> data{TensorD(Shape{1, 1, 2, 2}, (Eigen::ArrayXd(4) << 0.2, -0.1, 0.4, 0.0).finished()), sigma};
  GaussianOracle<double> oracle(data, s);
  int const n = 5000;
  for (int t : {20, 200, 600}) {
    TensorD x0 = randn<double>(Shape{n, 1, 2, 2}, rng);
    for (int i = 0; i < n; ++i) { x0.sample_block(i) = data.mean.data() + sigma * x0.sample_block(i); }
    TensorD const eps = randn<double>(x0.shape(), rng);
    std::vector<int> const ts(n, t);
    double const loss = training_loss(oracle, x0, TensorD(Shape{n, 1, 2, 2}), ts, eps, s);
    double const expected = gaussian_residual_variance(t, sigma, s);
    CHECK(std::abs(loss - expected) < 4.0 * expected * std::sqrt(2.0 / (4.0 * n)));
  }
}

TEST_CASE("gaussian kl")
{
  Eigen::ArrayXd const m = Eigen::ArrayXd::LinSpaced(5, -1, 1);
  CHECK(gaussian_kl(m, 0.3, m, 0.3) == 0.0);
  double const kl = gaussian_kl(m, 0.5, Eigen::ArrayXd::Zero(5).eval(), 2.0);
  double const expected = 0.5 * (std::log(4.0) + (0.5 + m.square().mean()) / 2.0 - 1.0);
  CHECK(kl == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("discretized decoder likelihood")
{
  Eigen::ArrayXd const x = (Eigen::ArrayXd(3) << -1.0, 0.0, 1.0).finished();
  double const nll = discretized_gaussian_nll(x, x, 1e-4);
  CHECK(nll > 0.0);
  CHECK(nll < 1.0);
  CHECK(discretized_gaussian_nll(x, x, 1e-4) < discretized_gaussian_nll(x, (x + 0.2).eval(), 1e-4));
}

TEST_CASE("variational bound with the ideal predictor")
{
  NoiseSchedule const &s = full_schedule();
  double const sigma = 0.5;
  GaussianData<double> data{TensorD(Shape{1, 1, 2, 2}, (Eigen::ArrayXd(4) << 0.3, -0.2, 0.5, 0.0).finished()), sigma};
  GaussianOracle<double> oracle(data, s);
  Rng rng(9);
  TensorD const x0(Shape{1, 1, 2, 2}, data.mean.data() + sigma * randn<double>(Shape{1, 1, 2, 2}, rng).data());
  Rng replay = rng;
  VlbTerms const terms = vlb_terms<double>(oracle, x0, TensorD(Shape{1, 1, 2, 2}), s, VarianceMode::Beta, rng);
  CHECK(terms.prior < 1e-3);
  REQUIRE(terms.kl.size() == 999);

  for (int t = 1; t <= 1000; ++t) {
    std::normal_distribution<double> normal;
    double const ab = s.alpha_bar(t);
    double const ab_prev = s.alpha_bar(t - 1);
    double const gain = std::sqrt(1.0 - ab) / (ab * sigma * sigma + 1.0 - ab);
    double mean_sq = 0.0;
    for (int p = 0; p < 4; ++p) {
      double const xt = std::sqrt(ab) * x0[p] + std::sqrt(1.0 - ab) * normal(replay);
      double const eps_star = gain * (xt - std::sqrt(ab) * data.mean[p]);
      double const model_mean = (xt - s.beta(t) / std::sqrt(1.0 - ab) * eps_star) / std::sqrt(s.alpha(t));
      double const true_mean = (std::sqrt(ab_prev) * s.beta(t) * x0[p] + std::sqrt(s.alpha(t)) * (1.0 - ab_prev) * xt) / (1.0 - ab);
      mean_sq += (true_mean - model_mean) * (true_mean - model_mean) / 4.0;
    }
    if (t == 1) { continue; }
    double const v1 = (1.0 - ab_prev) / (1.0 - ab) * s.beta(t);
    double const v2 = s.beta(t);
    double const expected = 0.5 * (std::log(v2 / v1) + (v1 + mean_sq) / v2 - 1.0);
    CHECK(terms.kl[t - 2] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(terms.kl[t - 2] >= 0.0);
  }
  CHECK(terms.decoder >= 0.0);
  CHECK(std::isfinite(terms.total()));
}
