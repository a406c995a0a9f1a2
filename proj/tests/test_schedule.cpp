#include "t2v/errors.hpp"
#include "t2v/schedule.hpp"

#include <doctest.h>

#include <cmath>

using namespace t2v;

TEST_CASE("linear schedule small cases")
{
  NoiseSchedule const one = linear_schedule(1, 0.5, 0.5);
  REQUIRE(one.num_steps() == 1);
  CHECK(one.betas[0] == 0.5);
  CHECK(one.alpha_bars[0] == 0.5);

  NoiseSchedule const two = linear_schedule(2, 0.1, 0.3);
  CHECK(two.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(two.alpha_bars[1] == doctest::Approx(0.63).epsilon(1e-15));
}

TEST_CASE("linear schedule default endpoints")
{
  NoiseSchedule const s = linear_schedule(1000, 1e-4, 0.02);
  double product = 1.0;
  for (int i = 0; i < 1000; ++i) { product *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0); }
  CHECK(s.alpha_bars[999] == doctest::Approx(product).epsilon(1e-12));
  CHECK(s.alpha_bars[999] == doctest::Approx(4.0358e-5).epsilon(1e-4));
  CHECK(s.alpha_bars[999] < 1e-4);
  CHECK_FALSE(validate_schedule(s).has_value());
  CHECK(s.alpha_bars[0] == s.alphas[0]);
  for (int i = 1; i < 1000; ++i) {
    CHECK(s.alpha_bars[i] == s.alpha_bars[i - 1] * s.alphas[i]);
    CHECK(s.alpha_bars[i] < s.alpha_bars[i - 1]);
    CHECK(s.posterior_variances[i] > 0.0);
    CHECK(s.posterior_variances[i] <= s.betas[i]);
  }
}

TEST_CASE("first posterior variance equals first beta")
{
  NoiseSchedule const s = linear_schedule(1000);
  CHECK(s.posterior_variance(1) == s.beta(1));
  CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("cosine schedule")
{
  NoiseSchedule const s = cosine_schedule(1000, 0.008);
  CHECK(s.alpha_bars.front() > 0.999);
  CHECK(s.alpha_bars.back() < 1e-4);
  for (double b : s.betas) { CHECK(b <= 0.999); }
  CHECK_FALSE(validate_schedule(s).has_value());
  NoiseSchedule const small = cosine_schedule(10, 0.008);
  for (int i = 1; i < 10; ++i) { CHECK(small.alpha_bars[i] < small.alpha_bars[i - 1]); }
}

TEST_CASE("spaced indices")
{
  CHECK(spaced_indices(1000, 1) == std::vector<int>{999});
  std::vector<int> const idx = spaced_indices(1000, 100);
  REQUIRE(idx.size() == 100);
  CHECK(idx.front() == 0);
  CHECK(idx.back() == 999);
  for (std::size_t i = 1; i < idx.size(); ++i) { CHECK(idx[i] > idx[i - 1]); }
  CHECK(spaced_indices(10, 10) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK_THROWS_AS(spaced_indices(10, 11), RangeError);
  CHECK_THROWS_AS(spaced_indices(10, 0), RangeError);
}

TEST_CASE("rescale schedule")
{
  NoiseSchedule const full = linear_schedule(1000, 1e-4, 0.02);

  SUBCASE("identity when lengths agree")
  {
    NoiseSchedule const same = rescale_schedule(full, 1000);
    for (int i = 0; i < 1000; ++i) { CHECK(std::abs(same.betas[i] - full.betas[i]) < 1e-12); }
  }
  SUBCASE("single step absorbs the chain")
  {
    NoiseSchedule const one = rescale_schedule(full, 1);
    REQUIRE(one.num_steps() == 1);
    CHECK(one.betas[0] == doctest::Approx(1.0 - full.alpha_bars[999]).epsilon(1e-15));
    // 1 - beta near 1 resolves only ~1.1e-16 absolute.
    CHECK(std::abs(one.alpha_bars[0] - full.alpha_bars[999]) <= 2.3e-16);
  }
  SUBCASE("hundred steps keep selected alpha bars exactly")
  {
    NoiseSchedule const r = rescale_schedule(full, 100);
    REQUIRE(r.num_steps() == 100);
    CHECK(r.alpha_bars[99] == full.alpha_bars[999]);
    std::vector<int> const idx = spaced_indices(1000, 100);
    for (int i = 0; i < 100; ++i) { CHECK(r.alpha_bars[i] == full.alpha_bars[idx[i]]); }
    CHECK_FALSE(validate_schedule(r).has_value());
    CHECK(r.model_timestep(1) == 1);
    CHECK(r.model_timestep(100) == 1000);
  }
  SUBCASE("nested rescaling composes indices")
  {
    NoiseSchedule const r = rescale_schedule(rescale_schedule(full, 100), 10);
    CHECK(r.model_timestep(10) == 1000);
    CHECK(r.alpha_bars[9] == full.alpha_bars[999]);
  }
  CHECK_THROWS_AS(rescale_schedule(full, 1001), RangeError);
}

TEST_CASE("snr")
{
  NoiseSchedule s = schedule_from_betas({0.5});
  CHECK(snr(s, 0) == doctest::Approx(1.0));
  NoiseSchedule tiny = schedule_from_betas({1e-300});
  CHECK(std::isfinite(snr(tiny, 0)));
  CHECK(snr(tiny, 0) == kSnrCap);
  NoiseSchedule const full = linear_schedule(1000);
  for (int i = 1; i < 1000; ++i) { CHECK(snr(full, i) < snr(full, i - 1)); }
}

TEST_CASE("invalid betas")
{
  CHECK_THROWS_AS(schedule_from_betas({0.1, 1.5}), RangeError);
  CHECK_THROWS_AS(schedule_from_betas({0.0}), RangeError);
  CHECK_THROWS_AS(schedule_from_betas({}), RangeError);
  CHECK_THROWS_AS(linear_schedule(0), RangeError);

  NoiseSchedule corrupt = linear_schedule(10);
  corrupt.betas[3] = 1.5;
  auto const err = validate_schedule(corrupt);
  REQUIRE(err.has_value());
  CHECK(err->find("range") != std::string::npos);
}

TEST_CASE("schedule descriptor")
{
  ScheduleDescriptor d;
  d.family = "cosine";
  d.num_steps = 50;
  CHECK(make_schedule(d).num_steps() == 50);
  d.family = "quadratic";
  CHECK_THROWS_AS(make_schedule(d), ConfigError);
}
