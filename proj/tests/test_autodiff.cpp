#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "condense/adam.hpp"
#include "condense/autodiff.hpp"
#include "condense/rng.hpp"

using namespace condense;

namespace {

Tensor random_away_from_kinks(std::vector<int> shape, Rng& rng) {
  // Magnitudes in [0.05, 0.5] with random sign: FD steps of 1e-2 cannot cross
  // the relu/|.| kinks at zero.
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) {
    const float mag = static_cast<float>(rng.uniform(0.05, 0.5));
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(101);
  Tensor xv = random_away_from_kinks({1, 2, 5, 5}, rng);
  Tensor wv = random_away_from_kinks({3, 2, 3, 3}, rng);
  auto x = make_param(xv);
  auto w = make_param(wv);

  auto loss_of = [&]() {
    auto out = op::conv2d(x, w, 2, 1);
    return op::sum(out);
  };
  auto root = loss_of();
  backward(root);

  auto recompute = [&]() {
    NoGradGuard ng;
    return static_cast<double>(kernels::sum(kernels::conv2d(x->value, w->value, 2, 1))[0]);
  };
  auto rx = oracles::check_gradient(recompute, x->value, x->grad);
  auto rw = oracles::check_gradient(recompute, w->value, w->grad);
  CHECK(rx.max_rel_err < 1e-3);
  CHECK(rw.max_rel_err < 1e-3);
}

TEST_CASE("conv2d weight gradient under zero weights is the input correlation") {
  // With w = 0 the output is zero, but dL/dw is the correlation of input with
  // the upstream gradient and must be non-trivial.
  Rng rng(103);
  Tensor xv = random_away_from_kinks({1, 1, 4, 4}, rng);
  auto x = make_const(xv);
  auto w = make_param(Tensor({1, 1, 3, 3}));
  auto out = op::conv2d(x, w, 1, 0);
  for (int64_t i = 0; i < out->value.size(); ++i) CHECK(out->value[i] == 0.0f);
  auto root = op::sum(out);
  backward(root);
  // upstream gradient is all ones; dW[kh][kw] = sum over output positions of x
  for (int kh = 0; kh < 3; ++kh) {
    for (int kw = 0; kw < 3; ++kw) {
      float expect = 0.0f;
      for (int oh = 0; oh < 2; ++oh) {
        for (int ow = 0; ow < 2; ++ow) expect += xv.at(0, 0, oh + kh, ow + kw);
      }
      CHECK(w->grad.at(0, 0, kh, kw) == doctest::Approx(expect).epsilon(1e-5));
    }
  }
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
  Rng rng(107);
  Tensor xv = random_away_from_kinks({1, 3, 4, 4}, rng);
  Tensor wv = random_away_from_kinks({3, 2, 4, 4}, rng);
  auto x = make_param(xv);
  auto w = make_param(wv);
  auto root = op::sum(op::conv_transpose2d(x, w, 2, 1));
  backward(root);
  auto recompute = [&]() {
    NoGradGuard ng;
    return static_cast<double>(kernels::sum(kernels::conv_transpose2d(x->value, w->value, 2, 1))[0]);
  };
  CHECK(oracles::check_gradient(recompute, x->value, x->grad).max_rel_err < 1e-3);
  CHECK(oracles::check_gradient(recompute, w->value, w->grad).max_rel_err < 1e-3);
}

TEST_CASE("concat gradient splits to both inputs") {
  Rng rng(109);
  auto a = make_param(random_away_from_kinks({1, 2, 3, 3}, rng));
  auto b = make_param(random_away_from_kinks({1, 3, 3, 3}, rng));
  auto root = op::sum(op::concat_channels(a, b));
  backward(root);
  // gradient of sum wrt a is all ones with a's shape
  REQUIRE(a->grad.shape() == a->value.shape());
  REQUIRE(b->grad.shape() == b->value.shape());
  for (int64_t i = 0; i < a->grad.size(); ++i) CHECK(a->grad[i] == 1.0f);
  for (int64_t i = 0; i < b->grad.size(); ++i) CHECK(b->grad[i] == 1.0f);
}

TEST_CASE("activation gradients") {
  SUBCASE("sigmoid slope at zero is 0.25") {
    auto x = make_param(Tensor({1}, {0.0f}));
    auto root = op::sum(op::activation(x, Act::sigmoid));
    backward(root);
    CHECK(x->grad[0] == doctest::Approx(0.25f));
  }
  SUBCASE("finite differences across kinds") {
    Rng rng(113);
    for (Act kind : {Act::relu, Act::leaky_relu, Act::tanh, Act::sigmoid}) {
      auto x = make_param(random_away_from_kinks({2, 2, 3, 3}, rng));
      auto root = op::sum(op::activation(x, kind, 0.2f));
      backward(root);
      auto recompute = [&]() {
        NoGradGuard ng;
        return static_cast<double>(kernels::sum(kernels::activation(x->value, kind, 0.2f))[0]);
      };
      CHECK(oracles::check_gradient(recompute, x->value, x->grad, 1e-2f).max_rel_err < 1e-3);
    }
  }
  SUBCASE("leaky slope domain") {
    auto x = make_param(Tensor({1}, {1.0f}));
    CHECK_THROWS_AS(op::activation(x, Act::leaky_relu, 1.5f), DomainError);
  }
}

TEST_CASE("instance_norm gradient matches finite differences") {
  // FD runs against a double-precision re-implementation of the forward;
  // normalization couples every element of a plane, so fp32 forwards are too
  // noisy for tight difference quotients.
  Rng rng(127);
  auto x = make_param(random_away_from_kinks({2, 2, 4, 4}, rng));
  auto root = op::sum(op::activation(op::instance_norm(x), Act::tanh));
  backward(root);
  auto recompute = [&]() {
    const Tensor& t = x->value;
    const int64_t hw = 16;
    double total = 0.0;
    for (int plane = 0; plane < 4; ++plane) {
      const float* p = t.data() + plane * hw;
      double mean = 0.0, var = 0.0;
      for (int64_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<double>(hw);
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (int64_t i = 0; i < hw; ++i) total += std::tanh((p[i] - mean) * inv);
    }
    return total;
  };
  CHECK(oracles::check_gradient(recompute, x->value, x->grad, 1e-3f).max_rel_err < 1e-3);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(131);
  SUBCASE("l1") {
    auto p = make_param(random_away_from_kinks({1, 3, 4, 4}, rng));
    Tensor tv = random_away_from_kinks({1, 3, 4, 4}, rng);
    // keep |p - t| >= 2e-2 so FD never crosses the |.| kink
    for (int64_t i = 0; i < tv.size(); ++i) {
      if (std::fabs(tv[i] - p->value[i]) < 2e-2f) tv[i] += 0.1f;
    }
    auto t = make_const(tv);
    auto root = op::l1_loss(p, t);
    backward(root);
    auto recompute = [&]() {
      NoGradGuard ng;
      return static_cast<double>(kernels::l1_loss(p->value, t->value)[0]);
    };
    CHECK(oracles::check_gradient(recompute, p->value, p->grad, 5e-3f, 1e-3).max_rel_err < 1e-3);
  }
  SUBCASE("bce") {
    Tensor pv({2, 8});
    Rng r2(137);
    for (int64_t i = 0; i < pv.size(); ++i) pv[i] = static_cast<float>(r2.uniform(0.1, 0.9));
    Tensor tv({2, 8});
    for (int64_t i = 0; i < tv.size(); ++i) tv[i] = r2.uniform() < 0.5 ? 0.0f : 1.0f;
    auto p = make_param(pv);
    auto t = make_const(tv);
    auto root = op::bce_loss(p, t);
    backward(root);
    auto recompute = [&]() {
      NoGradGuard ng;
      return static_cast<double>(kernels::bce_loss(p->value, t->value)[0]);
    };
    CHECK(oracles::check_gradient(recompute, p->value, p->grad, 5e-3f, 1e-3).max_rel_err < 1e-3);
  }
}

TEST_CASE("composite graph gradient flows through shared nodes") {
  // y = sum(conv(x,w)) + 2 * sum(x): x appears on two paths.
  Rng rng(139);
  auto x = make_param(random_away_from_kinks({1, 1, 4, 4}, rng));
  auto w = make_param(random_away_from_kinks({1, 1, 3, 3}, rng));
  auto root = op::add(op::sum(op::conv2d(x, w, 1, 1)), op::scale(op::sum(x), 2.0f));
  backward(root);
  auto recompute = [&]() {
    NoGradGuard ng;
    double a = kernels::sum(kernels::conv2d(x->value, w->value, 1, 1))[0];
    double b = kernels::sum(x->value)[0];
    return a + 2.0 * b;
  };
  CHECK(oracles::check_gradient(recompute, x->value, x->grad).max_rel_err < 1e-3);
}

TEST_CASE("detach cuts the tape") {
  Rng rng(149);
  auto x = make_param(random_away_from_kinks({1, 1, 3, 3}, rng));
  auto d = detach(x);
  CHECK_FALSE(d->requires_grad);
  auto root = op::sum(d);
  CHECK_FALSE(root->requires_grad);
}

TEST_CASE("no-grad guard suppresses recording") {
  Rng rng(151);
  auto x = make_param(random_away_from_kinks({1, 1, 3, 3}, rng));
  {
    NoGradGuard ng;
    auto s = op::sum(x);
    CHECK_FALSE(s->requires_grad);
    CHECK(s->parents.empty());
  }
  auto s2 = op::sum(x);
  CHECK(s2->requires_grad);
}

TEST_CASE("adam step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto p = make_param(Tensor({4}, {1.0f, -2.0f, 3.0f, 0.5f}));
    std::vector<VarPtr> params = {p};
    AdamState st = AdamState::init(params, 1e-4);
    p->ensure_grad();  // zeros
    adam_step(params, st);
    CHECK(st.step_count == 1);
    CHECK(p->value[0] == 1.0f);
    CHECK(p->value[1] == -2.0f);
    CHECK(p->value[2] == 3.0f);
    CHECK(p->value[3] == 0.5f);
  }
  SUBCASE("first step is approximately -lr * sign(g)") {
    // bias correction makes m-hat = g and v-hat = g^2 on step one
    auto p = make_param(Tensor({3}, {0.0f, 0.0f, 0.0f}));
    std::vector<VarPtr> params = {p};
    AdamState st = AdamState::init(params, 1e-4);
    p->ensure_grad();
    p->grad[0] = 0.7f;
    p->grad[1] = -0.2f;
    p->grad[2] = 3.0f;
    adam_step(params, st);
    CHECK(p->value[0] == doctest::Approx(-1e-4).epsilon(1e-3));
    CHECK(p->value[1] == doctest::Approx(1e-4).epsilon(1e-3));
    CHECK(p->value[2] == doctest::Approx(-1e-4).epsilon(1e-3));
  }
  SUBCASE("constant gradient moves the parameter monotonically") {
    auto p = make_param(Tensor({1}, {0.5f}));
    std::vector<VarPtr> params = {p};
    AdamState st = AdamState::init(params, 1e-3);
    float prev = p->value[0];
    for (int i = 0; i < 5; ++i) {
      p->ensure_grad();
      p->grad[0] = 1.0f;
      adam_step(params, st);
      CHECK(p->value[0] < prev);
      prev = p->value[0];
    }
    CHECK(st.step_count == 5);
  }
  SUBCASE("missing gradient is a state error") {
    auto p = make_param(Tensor({2}));
    std::vector<VarPtr> params = {p};
    AdamState st = AdamState::init(params, 1e-4);
    CHECK_THROWS_AS(adam_step(params, st), StateError);
  }
}
