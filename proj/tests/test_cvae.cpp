#include <catch2/catch_amalgamated.hpp>

#include "artic/model/cvae.hpp"
#include "gradcheck.hpp"

using namespace artic;
using namespace artic::model;
namespace ad = artic::ad;

namespace {

CVAEConfig small_config() {
  CVAEConfig cfg;
  cfg.latent_dim = 8;
  cfg.vocab_size = 12;
  cfg.c_feature = 4;
  cfg.enc_hidden = 16;
  return cfg;
}

Tensor rand_frames(Rng& rng, int n) {
  Tensor t({n, 3, 64, 64});
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("encode emits a latent posterior of the configured size") {
  Rng rng(1);
  CVAE cvae(small_config(), rng);
  ad::Tape t;
  auto post = cvae.encode(t, t.constant(rand_frames(rng, 2)), {3, 5});
  REQUIRE(t.val(post.mean).shape() == std::vector<int>({2, 8}));
  REQUIRE(t.val(post.logvar).shape() == std::vector<int>({2, 8}));
  REQUIRE_THROWS(cvae.encode(t, t.constant(rand_frames(rng, 1)), {99}));
}

TEST_CASE("conditioning reaches the posterior: different ids differ") {
  Rng rng(2);
  CVAE cvae(small_config(), rng);
  Tensor frame = rand_frames(rng, 1);
  ad::Tape t1(false, nullptr, false), t2(false, nullptr, false);
  auto p1 = cvae.encode(t1, t1.constant(frame), {3});
  auto p2 = cvae.encode(t2, t2.constant(frame), {9});
  real diff = 0;
  for (int j = 0; j < 8; ++j)
    diff = std::max(diff, std::abs(t1.val(p1.mean).at(0, j) - t2.val(p2.mean).at(0, j)));
  REQUIRE(diff > 1e-8);
}

TEST_CASE("reparameterize: closed-form cases and Monte-Carlo statistics") {
  Rng rng(3);
  ad::Tape t;
  Tensor mean = Tensor::from({1, 4}, {0.3, -1.2, 0.0, 2.0});
  Tensor logvar = Tensor::from({1, 4}, {0.0, 0.5, -0.7, 0.0});
  LatentPosterior post{t.leaf(mean, false), t.leaf(logvar, false)};

  // noise = 0 -> z = mean
  ad::Var z0 = reparameterize(t, post, Tensor({1, 4}));
  for (int j = 0; j < 4; ++j)
    REQUIRE_THAT(t.val(z0).at(0, j), Catch::Matchers::WithinAbs(mean.at(0, j), 1e-12));

  // logvar = 0 (unit variance), noise = e_1 -> z = mean + e_1
  {
    ad::Tape t2;
    LatentPosterior unit{t2.leaf(mean, false), t2.leaf(Tensor({1, 4}), false)};
    Tensor e1({1, 4});
    e1.at(0, 0) = 1.0;
    ad::Var z = reparameterize(t2, unit, e1);
    REQUIRE_THAT(t2.val(z).at(0, 0),
                 Catch::Matchers::WithinAbs(mean.at(0, 0) + 1.0, 1e-12));
    for (int j = 1; j < 4; ++j)
      REQUIRE_THAT(t2.val(z).at(0, j), Catch::Matchers::WithinAbs(mean.at(0, j), 1e-12));
  }

  // Monte-Carlo: sample mean within 3*sigma/sqrt(N), sample std matches
  const int N = 100000;
  std::vector<double> sum(4, 0), sumsq(4, 0);
  Rng noise_rng(44);
  for (int i = 0; i < N; ++i) {
    Tensor noise({1, 4});
    noise_rng.fill_normal(noise, 0.0, 1.0);
    ad::Tape ts(false, nullptr, false);
    LatentPosterior p{ts.leaf(mean, false), ts.leaf(logvar, false)};
    const Tensor& z = ts.val(reparameterize(ts, p, noise));
    for (int j = 0; j < 4; ++j) {
      sum[static_cast<std::size_t>(j)] += z.at(0, j);
      sumsq[static_cast<std::size_t>(j)] += z.at(0, j) * z.at(0, j);
    }
  }
  for (int j = 0; j < 4; ++j) {
    const double sigma = std::exp(0.5 * logvar.at(0, j));
    const double m = sum[static_cast<std::size_t>(j)] / N;
    REQUIRE(std::abs(m - mean.at(0, j)) < 3.0 * sigma / std::sqrt(static_cast<double>(N)));
    const double var = sumsq[static_cast<std::size_t>(j)] / N - m * m;
    REQUIRE_THAT(std::sqrt(var), Catch::Matchers::WithinRel(sigma, 0.02));
  }
}

TEST_CASE("KL closed forms") {
  ad::Tape t;
  {
    LatentPosterior p{t.leaf(Tensor({1, 64}), false), t.leaf(Tensor({1, 64}), false)};
    REQUIRE_THAT(t.val(kl_divergence(t, p))[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  {
    Tensor e1({1, 64});
    e1.at(0, 0) = 1.0;
    LatentPosterior p{t.leaf(e1, false), t.leaf(Tensor({1, 64}), false)};
    REQUIRE_THAT(t.val(kl_divergence(t, p))[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
  }
  // non-negativity over random posteriors
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    Tensor m({2, 16}), lv({2, 16});
    rng.fill_normal(m, 0.0, 2.0);
    rng.fill_normal(lv, 0.0, 1.5);
    ad::Tape tt;
    LatentPosterior p{tt.leaf(m, false), tt.leaf(lv, false)};
    REQUIRE(tt.val(kl_divergence(tt, p))[0] >= -1e-12);
  }
}

TEST_CASE("loss decomposes as MSE + beta*KL; zero-MSE case leaves beta*KL") {
  Rng rng(6);
  auto cfg = small_config();
  cfg.beta = 0.7;
  CVAE cvae(cfg, rng);
  Tensor frames = rand_frames(rng, 2);
  Tensor noise({2, cfg.latent_dim});
  rng.fill_normal(noise, 0.0, 1.0);
  ad::Tape t(false, nullptr, false);
  auto parts = cvae.loss(t, frames, {2, 7}, noise);
  REQUIRE_THAT(t.val(parts.total)[0],
               Catch::Matchers::WithinRel(
                   t.val(parts.reconstruction)[0] + 0.7 * t.val(parts.kl)[0], 1e-12));
  // if reconstruction were perfect (MSE = 0), total == beta*KL by the identity
  REQUIRE_THAT(t.val(parts.total)[0] - t.val(parts.reconstruction)[0],
               Catch::Matchers::WithinRel(0.7 * t.val(parts.kl)[0], 1e-12));
}

TEST_CASE("decode: shape, range, determinism, F tap contract") {
  Rng rng(7);
  auto cfg = small_config();
  CVAE cvae(cfg, rng);
  Tensor z({3, cfg.latent_dim});
  rng.fill_normal(z, 0.0, 1.0);
  auto run = [&]() {
    ad::Tape t(false, nullptr, false);
    ad::Var f;
    ad::Var frame = cvae.decode(t, t.constant(z), {1, 5, 5}, &f);
    return std::pair<Tensor, Tensor>(t.val(frame).clone(), t.val(f).clone());
  };
  auto [f1, tap1] = run();
  auto [f2, tap2] = run();
  REQUIRE(f1.shape() == std::vector<int>({3, 3, 64, 64}));
  REQUIRE(tap1.shape() == std::vector<int>({3, cfg.c_feature, 8, 8}));
  for (std::int64_t i = 0; i < f1.numel(); ++i) {
    REQUIRE(f1[i] >= 0.0);
    REQUIRE(f1[i] <= 1.0);
    REQUIRE(f1[i] == f2[i]);  // same (z, id) twice
  }
  for (std::int64_t i = 0; i < tap1.numel(); ++i) REQUIRE(tap1[i] == tap2[i]);
}

TEST_CASE("sample_feature_sequence: shape, seeding, per-frame noise") {
  Rng rng(8);
  auto cfg = small_config();
  CVAE cvae(cfg, rng);
  const std::vector<int> ids(10, 4);  // repeated identical phoneme
  Tensor a = sample_feature_sequence(cvae, ids, 123);
  Tensor b = sample_feature_sequence(cvae, ids, 123);
  Tensor c = sample_feature_sequence(cvae, ids, 124);
  REQUIRE(a.shape() == std::vector<int>({10, cfg.c_feature, 8, 8}));
  for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  bool differs_across_seeds = false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != c[i]) differs_across_seeds = true;
  REQUIRE(differs_across_seeds);
  // distinct noise draws -> distinct F maps even for identical ids
  const std::int64_t fsz = a.numel() / 10;
  real diff = 0;
  for (std::int64_t i = 0; i < fsz; ++i) diff = std::max(diff, std::abs(a[i] - a[fsz + i]));
  REQUIRE(diff > 1e-9);
}

TEST_CASE("cvae gradient check through reparameterized loss") {
  Rng rng(9);
  CVAEConfig cfg;
  cfg.latent_dim = 4;
  cfg.vocab_size = 6;
  cfg.c_feature = 2;
  cfg.enc_hidden = 8;
  CVAE cvae(cfg, rng);
  Tensor frames = rand_frames(rng, 1);
  Tensor noise({1, cfg.latent_dim});
  rng.fill_normal(noise, 0.0, 1.0);
  auto r = gradcheck::check_params(
      cvae.parameters(),
      [&](ad::Tape& t) { return cvae.loss(t, frames, {3}, noise).total; },
      rng, 1, 1e-6, /*training=*/true);
  REQUIRE(r.checked >= 20);
  REQUIRE(r.max_rel_err < 1e-3);
}
