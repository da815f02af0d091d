#include <cmath>
#include <limits>
#include <vector>

#include "../support/gradcheck.h"
#include "doctest.h"
#include "oneshot/error.h"
#include "oneshot/nn.h"

using namespace oneshot;
using namespace oneshot::nn;

namespace {

Var value(Shape shape, std::vector<double> data) { return constant(Tensor(shape, data)); }

}  // namespace

TEST_CASE("conv1d hand examples") {
  const auto y = conv1d(value({1, 1, 4}, {1, 2, 3, 4}), value({1, 1, 3}, {1, 0, -1}), value({1}, {0}));
  CHECK(y->value == Tensor({1, 1, 2}, {-2, -2}));

  const auto z = conv1d(value({1, 2, 5}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), constant(Tensor({3, 2, 3})),
                        value({3}, {0.5, -1, 2}));
  REQUIRE(z->value.shape() == Shape{1, 3, 3});
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t t = 0; t < 3; ++t) CHECK(z->value[f * 3 + t] == Tensor({3}, {0.5, -1, 2})[f]);

  const auto strided = conv1d(value({1, 1, 7}, {0, 1, 2, 3, 4, 5, 6}), value({1, 1, 2}, {1, 1}),
                              value({1}, {0}), 2);
  CHECK(strided->value == Tensor({1, 1, 3}, {1, 5, 9}));

  CHECK_THROWS_AS(conv1d(value({1, 1, 2}, {1, 2}), value({1, 1, 3}, {1, 1, 1}), value({1}, {0})),
                  ShapeError);
  CHECK_THROWS_AS(conv1d(value({1, 2, 4}, std::vector<double>(8)), value({1, 1, 3}, {1, 1, 1}),
                         value({1}, {0})),
                  ShapeError);
}

TEST_CASE("conv1d matches a triple loop") {
  Rng rng(21);
  const auto x = gradcheck::random_tensor(rng, {2, 3, 9});
  const auto w = gradcheck::random_tensor(rng, {4, 3, 3});
  const auto b = gradcheck::random_tensor(rng, {4});
  const auto y = conv1d(constant(x), constant(w), constant(b))->value;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 4; ++f)
      for (std::size_t t = 0; t < 7; ++t) {
        double acc = b[f];
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t k = 0; k < 3; ++k) acc += w[(f * 3 + c) * 3 + k] * x[(n * 3 + c) * 9 + t + k];
        CHECK(y[(n * 4 + f) * 7 + t] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("dense, activations, distance, loss") {
  const auto x = value({1, 3}, {1, -2, 3});
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1;
  CHECK(dense(x, constant(eye), value({3}, {0, 0, 0}))->value == x->value);
  CHECK(dense(x, constant(Tensor({2, 3})), value({2}, {4, 5}))->value == Tensor({1, 2}, {4, 5}));
  CHECK_THROWS_AS(dense(x, constant(Tensor({2, 4})), value({2}, {0, 0})), ShapeError);

  CHECK(relu(value({1, 2}, {-1, 2}))->value == Tensor({1, 2}, {0, 2}));
  CHECK(sigmoid(value({1, 1}, {0}))->value[0] == 0.5);
  CHECK(nn::tanh(value({1, 1}, {0}))->value[0] == 0.0);

  CHECK(euclidean_distance(value({1, 2}, {0, 0}), value({1, 2}, {3, 4}))->value[0] == 5.0);
  CHECK(euclidean_distance(value({1, 2}, {1, 1}), value({1, 2}, {1, 1}))->value[0] == 0.0);
  CHECK_THROWS_AS(euclidean_distance(value({1, 2}, {0, 0}), value({1, 3}, {0, 0, 0})), ShapeError);

  CHECK(rmse_loss(value({1, 2}, {0, 0}), Tensor({1, 2}, {1, 1}))->value[0] == 1.0);
  CHECK(rmse_loss(value({1, 2}, {3, 3}), Tensor({1, 2}, {3, 3}))->value[0] == 0.0);
  CHECK_THROWS_AS(rmse_loss(value({1, 2}, {0, 0}), Tensor({1, 3})), ShapeError);

  const auto cat = concat({value({2, 1}, {1, 2}), value({2, 2}, {3, 4, 5, 6})});
  CHECK(cat->value == Tensor({2, 3}, {1, 3, 4, 2, 5, 6}));
  CHECK(flatten(value({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}))->value.shape() == Shape{2, 4});
}

TEST_CASE("guarded gradients at zero distance and zero loss") {
  auto a = parameter(Tensor({1, 2}, {1, 1}));
  auto b = parameter(Tensor({1, 2}, {1, 1}));
  backward(euclidean_distance(a, b));
  for (double g : a->grad.data()) CHECK(g == 0.0);
  for (double g : b->grad.data()) CHECK(g == 0.0);

  auto p = parameter(Tensor({1, 2}, {3, 3}));
  backward(rmse_loss(p, Tensor({1, 2}, {3, 3})));
  for (double g : p->grad.data()) CHECK(g == 0.0);
}

TEST_CASE("finite-difference checks on every op") {
  for (const auto &suite : gradcheck::op_suites()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = suite.run(seed);
      INFO(suite.name, " seed ", seed, " ", r.worst);
      CHECK(r.checked > 0);
      CHECK(r.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("composed graph gradients") {
  // conv -> relu -> flatten -> dense -> tanh, shared weights used twice
  Rng rng(5);
  const auto r = gradcheck::check(
      [](const std::vector<Var> &v) {
        const auto left = dense(flatten(relu(conv1d(v[0], v[2], v[3]))), v[4], v[5]);
        const auto right = dense(flatten(relu(conv1d(v[1], v[2], v[3]))), v[4], v[5]);
        return sigmoid(euclidean_distance(nn::tanh(left), nn::tanh(right)));
      },
      {gradcheck::random_tensor(rng, {2, 2, 6}), gradcheck::random_tensor(rng, {2, 2, 6}),
       gradcheck::random_tensor(rng, {3, 2, 3}), gradcheck::random_tensor(rng, {3}, 0.3, 0.6),
       gradcheck::random_tensor(rng, {4, 12}), gradcheck::random_tensor(rng, {4})},
      rng);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("dropout") {
  Rng rng(1);
  const auto x = gradcheck::random_tensor(rng, {10, 100});
  CHECK(dropout(constant(x), 0.0, rng, true)->value == x);
  CHECK(dropout(constant(x), 0.7, rng, false)->value == x);

  const Tensor ones({1, 100000}, 1.0);
  Rng r1(9);
  const auto y = dropout(constant(ones), 0.5, r1, true)->value;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == 2.0);
  }
  CHECK(std::abs(zeros / 1e5 - 0.5) <= 0.01);

  Rng r2(9);
  CHECK(dropout(constant(ones), 0.5, r2, true)->value == y);
  CHECK_THROWS_AS(dropout(constant(ones), 1.0, r2, true), UsageError);
}

TEST_CASE("non-finite values are rejected") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(relu(value({1, 1}, {inf})), NumericError);
  CHECK_THROWS_AS(dense(value({1, 1}, {1e308}), value({1, 1}, {1e308}), value({1}, {0})),
                  NumericError);
}

TEST_CASE("glorot initialisation") {
  Rng rng(3);
  const auto d = Dense::create(30, 20, rng, "d");
  const double limit = std::sqrt(6.0 / 50.0);
  for (double v : d.weight->value.data()) CHECK(std::abs(v) <= limit);
  for (double v : d.bias->value.data()) CHECK(v == 0.0);
  CHECK(d.weight->value.shape() == Shape{20, 30});

  const auto c = Conv1d::create(8, 4, 3, 1, rng, "c");
  const double climit = std::sqrt(6.0 / (8 * 3 + 4 * 3));
  for (double v : c.weight->value.data()) CHECK(std::abs(v) <= climit);
  CHECK(c.output_length(10) == 8);
}

TEST_CASE("rmsprop") {
  auto theta = parameter(Tensor({1}, 0.0), "theta");
  Rmsprop opt({theta}, {1e-5, 0.0, 0.9, 1e-8});
  SUBCASE("zero gradient leaves parameters alone") {
    theta->grad_slot();
    opt.step();
    CHECK(theta->value[0] == 0.0);
  }
  SUBCASE("first step") {
    theta->accumulate(std::vector<double>{1.0});
    opt.step();
    CHECK(theta->value[0] == doctest::Approx(-1e-5 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-12));
    CHECK(opt.cache()[0][0] == doctest::Approx(0.1));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("inverse-time decay") {
    Rmsprop decaying({theta}, {1e-3, 1e-2, 0.9, 1e-8});
    double previous = decaying.current_learning_rate();
    CHECK(previous == 1e-3);
    for (int i = 0; i < 5; ++i) {
      theta->accumulate(std::vector<double>{0.5});
      decaying.step();
      zero_grad(std::vector<Var>{theta});
      const double lr = decaying.current_learning_rate();
      CHECK(lr < previous);
      CHECK(lr == doctest::Approx(1e-3 / (1 + 1e-2 * (i + 1))));
      previous = lr;
    }
  }
}

TEST_CASE("gradients accumulate until cleared") {
  auto w = parameter(Tensor({1, 1}, 2.0));
  const auto x = value({1, 1}, {3});
  backward(rmse_loss(dense(x, w, constant(Tensor({1}))), Tensor({1, 1}, 0.0)));
  const double once = w->grad[0];
  backward(rmse_loss(dense(x, w, constant(Tensor({1}))), Tensor({1, 1}, 0.0)));
  CHECK(w->grad[0] == doctest::Approx(2 * once));
  zero_grad(std::vector<Var>{w});
  CHECK(w->grad[0] == 0.0);
  CHECK_THROWS_AS(backward(dense(value({1, 2}, {1, 1}), constant(Tensor({2, 2})), value({2}, {0, 0}))),
                  ShapeError);
}

TEST_CASE("toy network learns a separable problem") {
  Rng rng(17);
  const auto l1 = Dense::create(2, 4, rng, "l1");
  const auto l2 = Dense::create(4, 1, rng, "l2");
  std::vector<Var> params{l1.weight, l1.bias, l2.weight, l2.bias};
  Rmsprop opt(params, {0.01, 0.0, 0.9, 1e-8});
  const auto x = value({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
  const Tensor target({4, 1}, {0, 0, 1, 1});
  double loss = 1.0;
  for (int step = 0; step < 200; ++step) {
    zero_grad(params);
    const auto l = rmse_loss(sigmoid(l2(nn::tanh(l1(x)))), target);
    loss = l->value[0];
    backward(l);
    opt.step();
  }
  CHECK(loss < 0.1);
}

TEST_CASE("no-grad scope records nothing") {
  auto w = parameter(Tensor({1, 1}, 1.0));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const auto y = dense(value({1, 1}, {2}), w, constant(Tensor({1})));
    CHECK(y->parents.empty());
    CHECK_FALSE(y->requires_grad);
  }
  CHECK(grad_enabled());
}
