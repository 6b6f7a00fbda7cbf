#include <catch2/catch_amalgamated.hpp>

#include "artic/ad/conv.hpp"
#include "artic/ad/ops.hpp"
#include "gradcheck.hpp"

using artic::Rng;
using artic::Tensor;
using artic::real;
namespace ad = artic::ad;

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, real std_ = 1.0) {
  Tensor t(std::move(shape));
  rng.fill_normal(t, 0.0, std_);
  return t;
}

// Projects an output tensor to a scalar with fixed random weights so every
// output element contributes a distinct gradient.
ad::Var project(ad::Tape& t, ad::Var y, unsigned seed = 77) {
  Rng r(seed);
  Tensor k(t.val(y).shape());
  r.fill_normal(k, 0.0, 1.0);
  return ad::sum_all(t, ad::mul(t, y, t.constant(k)));
}

constexpr real kTol = 1e-6;

}  // namespace

TEST_CASE("gradcheck elementwise and reduction ops") {
  Rng rng(1);
  auto check1 = [&](const char* name, gradcheck::LossFn fn, std::vector<Tensor> in) {
    auto r = gradcheck::check(std::move(in), fn, rng);
    INFO(name);
    REQUIRE(r.max_rel_err < kTol);
  };
  check1("add", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::add(t, v[0], v[1]));
  }, {randn(rng, {3, 4}), randn(rng, {3, 4})});
  check1("affine", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::affine(t, v[0], -1.7, 0.3));
  }, {randn(rng, {5})});
  check1("mul", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::mul(t, v[0], v[1]));
  }, {randn(rng, {2, 6}), randn(rng, {2, 6})});
  check1("add_bias_rows", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::add_bias_rows(t, v[0], v[1]));
  }, {randn(rng, {4, 3}), randn(rng, {3})});
  check1("sigmoid", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::sigmoid(t, v[0]));
  }, {randn(rng, {7})});
  check1("exp", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::exp_(t, v[0]));
  }, {randn(rng, {7})});
  check1("softmax_rows", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::softmax_rows(t, v[0]));
  }, {randn(rng, {4, 6})});
  check1("mean_all", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return ad::mean_all(t, ad::mul(t, v[0], v[0]));
  }, {randn(rng, {3, 3})});
  check1("reshape+slice+concat", [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var r = ad::reshape(t, v[0], {4, 6});
    ad::Var a = ad::slice_cols(t, r, 0, 2);
    ad::Var b = ad::slice_cols(t, r, 2, 6);
    return project(t, ad::concat_cols(t, {b, a}));
  }, {randn(rng, {2, 12})});
}

TEST_CASE("gradcheck relu away from the kink") {
  Rng rng(2);
  Tensor x = randn(rng, {40});
  for (std::int64_t i = 0; i < x.numel(); ++i)
    if (std::abs(x[i]) < 0.1) x[i] += 0.3;  // keep FD probes off the kink
  auto r = gradcheck::check({x}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return project(t, ad::relu(t, v[0]));
  }, rng);
  REQUIRE(r.max_rel_err < kTol);
}

TEST_CASE("gradcheck matmul all transpose combinations") {
  Rng rng(3);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      std::vector<int> sa = ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4};
      std::vector<int> sb = tb ? std::vector<int>{5, 4} : std::vector<int>{4, 5};
      auto r = gradcheck::check(
          {randn(rng, sa), randn(rng, sb)},
          [ta, tb](ad::Tape& t, const std::vector<ad::Var>& v) {
            return project(t, ad::matmul(t, v[0], v[1], ta, tb));
          },
          rng, 8);
      REQUIRE(r.max_rel_err < kTol);
    }
}

TEST_CASE("gradcheck embedding, layer_norm, mse") {
  Rng rng(4);
  auto r1 = gradcheck::check({randn(rng, {6, 5})},
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return project(t, ad::embedding(t, {1, 4, 1, 0}, v[0]));
      }, rng, 10);
  REQUIRE(r1.max_rel_err < kTol);

  auto r2 = gradcheck::check(
      {randn(rng, {3, 8}), randn(rng, {8}), randn(rng, {8})},
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return project(t, ad::layer_norm(t, v[0], v[1], v[2]));
      }, rng, 8);
  REQUIRE(r2.max_rel_err < kTol);

  Rng tr(99);
  Tensor target = randn(tr, {4, 5});
  auto r3 = gradcheck::check({randn(rng, {4, 5})},
      [target](ad::Tape& t, const std::vector<ad::Var>& v) {
        return ad::mse_loss(t, v[0], target);
      }, rng, 8);
  REQUIRE(r3.max_rel_err < kTol);
}

TEST_CASE("gradcheck batch_norm train and eval") {
  Rng rng(5);
  Tensor run_mean({3}), run_var = Tensor::full({3}, 1.0);
  for (bool training : {true, false}) {
    Tensor rm = run_mean.clone(), rv = run_var.clone();
    auto r = gradcheck::check(
        {randn(rng, {2, 3, 4, 4}), randn(rng, {3}), randn(rng, {3})},
        [&rm, &rv](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, ad::batch_norm_c1(t, v[0], v[1], v[2], rm, rv));
        },
        rng, 8, 1e-5, training);
    INFO((training ? "train" : "eval"));
    REQUIRE(r.max_rel_err < kTol);
  }
}

TEST_CASE("gradcheck conv2d geometries") {
  Rng rng(6);
  struct G { int ci, co, k, s, p, hw; };
  for (G g : {G{2, 3, 3, 1, 1, 6}, G{3, 2, 4, 2, 1, 8}, G{1, 2, 8, 4, 2, 8}}) {
    auto r = gradcheck::check(
        {randn(rng, {2, g.ci, g.hw, g.hw}),
         randn(rng, {g.co, g.ci, g.k, g.k}), randn(rng, {g.co})},
        [g](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, ad::conv2d(t, v[0], v[1], v[2], g.s, g.p));
        },
        rng, 6);
    REQUIRE(r.max_rel_err < kTol);
  }
}

TEST_CASE("gradcheck conv3d temporal and spatial kernels") {
  Rng rng(7);
  for (int kt : {3, 1}) {
    auto r = gradcheck::check(
        {randn(rng, {4, 2, 5, 5}), randn(rng, {3, 2, kt, 3, 3}), randn(rng, {3})},
        [](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, ad::conv3d(t, v[0], v[1], v[2]));
        },
        rng, 8);
    REQUIRE(r.max_rel_err < kTol);
  }
}

TEST_CASE("gradcheck tconv2d upsampling geometries") {
  Rng rng(8);
  struct G { int ci, co, k, s, p, hw; };
  for (G g : {G{3, 2, 8, 4, 2, 4}, G{2, 3, 4, 2, 1, 5}}) {
    auto r = gradcheck::check(
        {randn(rng, {2, g.ci, g.hw, g.hw}),
         randn(rng, {g.ci, g.co, g.k, g.k}), randn(rng, {g.co})},
        [g](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, ad::tconv2d(t, v[0], v[1], v[2], g.s, g.p));
        },
        rng, 6);
    REQUIRE(r.max_rel_err < kTol);
  }
}

TEST_CASE("tconv2d shape law") {
  Rng rng(9);
  ad::Tape t;
  ad::Var x = t.constant(randn(rng, {3, 4, 8, 8}));
  ad::Var w = t.constant(randn(rng, {4, 2, 8, 8}));
  ad::Var b = t.constant(Tensor({2}));
  ad::Var y = ad::tconv2d(t, x, w, b, 4, 2);
  REQUIRE(t.val(y).shape() == std::vector<int>({3, 2, 32, 32}));
}

TEST_CASE("gradcheck maxpool/unpool and concat_chan") {
  Rng rng(10);
  auto r = gradcheck::check({randn(rng, {2, 2, 4, 4})},
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        auto pr = ad::maxpool2d(t, v[0]);
        return project(t, ad::maxunpool2d(t, pr.out, pr.indices));
      }, rng, 10);
  REQUIRE(r.max_rel_err < kTol);

  auto r2 = gradcheck::check(
      {randn(rng, {2, 2, 3, 3}), randn(rng, {2, 3, 3, 3})},
      [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return project(t, ad::concat_chan(t, v[0], v[1]));
      }, rng, 8);
  REQUIRE(r2.max_rel_err < kTol);
}

TEST_CASE("gradcheck pixel cross-entropy") {
  Rng rng(11);
  Tensor labels({2, 3, 3});
  Rng lr(12);
  for (std::int64_t i = 0; i < labels.numel(); ++i)
    labels[i] = static_cast<real>(lr.uniform_int(2));
  auto r = gradcheck::check({randn(rng, {2, 2, 3, 3})},
      [labels](ad::Tape& t, const std::vector<ad::Var>& v) {
        return ad::softmax_xent_chan(t, v[0], labels);
      }, rng, 10);
  REQUIRE(r.max_rel_err < kTol);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(13);
  ad::Tape t;
  ad::Var y = ad::softmax_rows(t, t.constant(randn(rng, {5, 9})));
  for (int i = 0; i < 5; ++i) {
    real s = 0;
    for (int j = 0; j < 9; ++j) s += t.val(y).at(i, j);
    REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("dropout: eval identity, train scaling preserves mean") {
  Rng rng(14);
  Tensor x = Tensor::full({10000}, 1.0);
  {
    ad::Tape t(false, &rng);
    ad::Var y = ad::dropout(t, t.constant(x), 0.5);
    REQUIRE(t.val(y).data() == x.data());  // pass-through
  }
  {
    ad::Tape t(true, &rng);
    ad::Var y = ad::dropout(t, t.constant(x), 0.3);
    const real mean = t.val(y).vec().mean();
    REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(1.0, 0.05));
  }
}

TEST_CASE("maxpool picks maxima and records indices for unpool") {
  Tensor x({1, 1, 2, 2});
  x.at(0, 0, 0, 0) = 1;
  x.at(0, 0, 0, 1) = 4;
  x.at(0, 0, 1, 0) = 2;
  x.at(0, 0, 1, 1) = 3;
  ad::Tape t;
  auto pr = ad::maxpool2d(t, t.constant(x));
  REQUIRE(t.val(pr.out).numel() == 1);
  REQUIRE(t.val(pr.out)[0] == 4.0);
  ad::Var u = ad::maxunpool2d(t, pr.out, pr.indices);
  REQUIRE(t.val(u).at(0, 0, 0, 1) == 4.0);
  REQUIRE(t.val(u).at(0, 0, 0, 0) == 0.0);
}

TEST_CASE("backward requires scalar loss") {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor({2, 2}), true);
  REQUIRE_THROWS_AS(t.backward(x), artic::ShapeError);
}
