#include <doctest.h>

#include "tbscreen/error.hpp"
#include "tbscreen/optim.hpp"
#include "tbscreen/rng.hpp"
#include "tbscreen/tensor.hpp"

using namespace tbscreen;

TEST_CASE("tensor shape and storage") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.at({1, 2}) == 1.5);
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK(shape_string(t.shape()) == "[2, 3]");
  CHECK(t.reshaped({3, 2}).values() == t.values());
  CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("tensor rejects inconsistent construction") {
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 3}).reshaped({4}), DimensionError);
  CHECK_THROWS_AS(Tensor({2}).item(), DimensionError);
}

TEST_CASE("gradient slot matches the value shape") {
  Tensor t({3}, 0.0);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), StateError);
  auto g = t.ensure_grad();
  CHECK(g.size() == t.size());
  g[1] = 2.0;
  t.zero_grad();
  CHECK(t.grad()[1] == 0.0);
  t.clear_grad();
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("sgd step") {
  SUBCASE("p=1, grad=2, lr=0.5 gives 0 and zeroes the gradient") {
    Tensor p({1}, 1.0);
    p.ensure_grad()[0] = 2.0;
    Tensor* ps[] = {&p};
    sgd_step(ps, 0.5);
    CHECK(p[0] == 0.0);
    CHECK(p.grad()[0] == 0.0);
  }
  SUBCASE("lr 0 leaves parameters unchanged") {
    Tensor p({2}, std::vector<double>{0.3, -0.7});
    p.ensure_grad()[0] = 5.0;
    p.grad()[1] = -1.0;
    Tensor* ps[] = {&p};
    sgd_step(ps, 0.0);
    CHECK(p.values() == std::vector<double>{0.3, -0.7});
  }
  SUBCASE("two steps on p^2 from 1 with lr 0.25") {
    Tensor p({1}, 1.0);
    Tensor* ps[] = {&p};
    p.ensure_grad()[0] = 2.0 * p[0];
    sgd_step(ps, 0.25);
    CHECK(p[0] == 0.5);
    p.grad()[0] = 2.0 * p[0];
    sgd_step(ps, 0.25);
    CHECK(p[0] == 0.25);
  }
  SUBCASE("missing gradient is a state error") {
    Tensor p({1}, 1.0);
    Tensor* ps[] = {&p};
    CHECK_THROWS_AS(sgd_step(ps, 0.1), StateError);
  }
}

TEST_CASE("momentum sgd accumulates velocity") {
  // v1 = g, v2 = mu*v1 + g with constant g = 1.
  Tensor p({1}, 0.0);
  Tensor* ps[] = {&p};
  MomentumSgd opt(0.1, 0.9);
  p.ensure_grad()[0] = 1.0;
  opt.step(ps);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-15));
  p.grad()[0] = 1.0;
  opt.step(ps);
  CHECK(p[0] == doctest::Approx(-0.1 - 0.19).epsilon(1e-15));
}

TEST_CASE("rng is reproducible and uniform draws lie in [0, 1)") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}
