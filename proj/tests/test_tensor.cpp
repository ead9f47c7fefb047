#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "multifuse/adam.hpp"
#include "multifuse/grad_check.hpp"
#include "multifuse/gradcheck_suite.hpp"
#include "multifuse/tensor.hpp"

using namespace multifuse;
using D = Tensor<double>;

TEST_CASE("construction validates shape and scalar access") {
  CHECK_THROWS_AS(D::from_data({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  D x = D::from_data({2}, {1.0, 2.0});
  CHECK_THROWS_AS(x.item(), std::invalid_argument);
  CHECK_THROWS_AS(x.backward(), std::invalid_argument);
  CHECK(D::from_data({1}, {5.0}).item() == 5.0);
}

TEST_CASE("add broadcasts a suffix operand and rejects anything else") {
  D a = D::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  D b = D::from_data({3}, {10, 20, 30});
  D s = add(a, b);
  CHECK(s.value() == std::vector<double>{11, 22, 33, 14, 25, 36});

  D c = D::from_data({2}, {1, 2});
  CHECK_THROWS_AS(add(a, c), std::invalid_argument);

  a = D::from_data({2, 3}, std::vector<double>(6, 0.0), true);
  b = D::from_data({3}, {0, 0, 0}, true);
  D loss = mean_all(add(a, b));
  loss.backward();
  // every bias entry feeds 2 of the 6 averaged outputs
  for (double g : a.grad()) CHECK(g == doctest::Approx(1.0 / 6).epsilon(1e-12));
  for (double g : b.grad()) CHECK(g == doctest::Approx(2.0 / 6).epsilon(1e-12));
}

TEST_CASE("elementwise forward values") {
  D x = D::from_data({4}, {-1.0, 0.0, 0.5, 2.0});
  CHECK(relu(x).value() == std::vector<double>{0.0, 0.0, 0.5, 2.0});
  CHECK(tanh(x).value()[3] == doctest::Approx(std::tanh(2.0)).epsilon(1e-15));
  CHECK(sigmoid(x).value()[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-15));
  CHECK(scale(x, 3.0).value() == std::vector<double>{-3.0, 0.0, 1.5, 6.0});
  CHECK(add_scalar(x, 1.0).value() == std::vector<double>{0.0, 1.0, 1.5, 3.0});
  CHECK_THROWS_AS(mul(x, D::from_data({2}, {1.0, 2.0})), std::invalid_argument);
}

TEST_CASE("matmul matches hand results for all three rank combinations") {
  D a = D::from_data({2, 2}, {1, 2, 3, 4});
  D b = D::from_data({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(a, b).value() == std::vector<double>{19, 22, 43, 50});

  // [1 x 2 x 2] x [2 x 2]: same arithmetic, leading batch axis kept
  D a3 = D::from_data({1, 2, 2}, {1, 2, 3, 4});
  D r = matmul(a3, b);
  CHECK(r.shape() == std::vector<std::size_t>{1, 2, 2});
  CHECK(r.value() == std::vector<double>{19, 22, 43, 50});

  // batched: second slice negated on the left
  D a3b = D::from_data({2, 2, 2}, {1, 2, 3, 4, -1, -2, -3, -4});
  D b3 = D::from_data({2, 2, 2}, {5, 6, 7, 8, 5, 6, 7, 8});
  D rb = matmul(a3b, b3);
  CHECK(rb.value() == std::vector<double>{19, 22, 43, 50, -19, -22, -43, -50});

  CHECK_THROWS_AS(matmul(a, D::from_data({3, 2}, std::vector<double>(6, 0.0))),
                  std::invalid_argument);
  CHECK_THROWS_AS(matmul(D::from_data({2}, {1.0, 2.0}), b), std::invalid_argument);
}

TEST_CASE("transpose swaps the trailing axes") {
  D x = D::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  D t = transpose(x);
  CHECK(t.shape() == std::vector<std::size_t>{3, 2});
  CHECK(t.value() == std::vector<double>{1, 4, 2, 5, 3, 6});

  D x3 = D::from_data({2, 1, 2}, {1, 2, 3, 4});
  CHECK(transpose(x3).shape() == std::vector<std::size_t>{2, 2, 1});
  CHECK_THROWS_AS(transpose(D::from_data({4}, {1, 2, 3, 4})), std::invalid_argument);
}

TEST_CASE("concat places inputs contiguously along the chosen axis") {
  D a = D::from_data({2, 2}, {1, 2, 3, 4});
  D b = D::from_data({2, 1}, {9, 10});
  D c1 = concat(a, b, 1);
  CHECK(c1.shape() == std::vector<std::size_t>{2, 3});
  CHECK(c1.value() == std::vector<double>{1, 2, 9, 3, 4, 10});

  D c0 = concat(a, D::from_data({1, 2}, {7, 8}), 0);
  CHECK(c0.value() == std::vector<double>{1, 2, 3, 4, 7, 8});

  CHECK_THROWS_AS(concat(a, b, 0), std::invalid_argument);
  CHECK_THROWS_AS(concat(std::vector<D>{}, 0), std::invalid_argument);
}

TEST_CASE("mean reduces one axis, mean_all reduces everything") {
  D x = D::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(mean(x, 1).value() == std::vector<double>{2, 5});
  CHECK(mean(x, 0).value() == std::vector<double>{2.5, 3.5, 4.5});
  CHECK(mean_all(x).item() == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("take_time selects one step of a [batch x time x dim] tensor") {
  D x = D::from_data({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(take_time(x, 1).value() == std::vector<double>{3, 4, 7, 8});
  CHECK_THROWS_AS(take_time(x, 2), std::invalid_argument);
  CHECK_THROWS_AS(take_time(D::from_data({2, 2}, {1, 2, 3, 4}), 0), std::invalid_argument);
}

TEST_CASE("layer_norm standardizes each slice") {
  D x = D::from_data({1, 3}, {1, 2, 3});
  const auto y = layer_norm(x, 1).value();
  const double s = std::sqrt(2.0 / 3.0 + 1e-5);
  CHECK(y[0] == doctest::Approx(-1.0 / s).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(1.0 / s).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  D x = D::from_data({2, 3}, {0.3, -1.0, 2.0, 5.0, 5.0, 5.0});
  const auto p = softmax(x, 1).value();
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 3; i < 6; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const double ninf = -std::numeric_limits<double>::infinity();
  D masked = masked_fill(x, {1, 0, 1, 1, 1, 1}, ninf);
  const auto pm = softmax(masked, 1).value();
  CHECK(pm[1] == 0.0);
  CHECK(pm[0] + pm[2] == doctest::Approx(1.0).epsilon(1e-12));

  // a fully masked slice has no finite entry to normalize against
  D all_masked = masked_fill(x, {0, 0, 0, 1, 1, 1}, ninf);
  CHECK_THROWS_AS(softmax(all_masked, 1), std::runtime_error);

  CHECK_THROWS_AS(masked_fill(x, {1, 0}, 0.0), std::invalid_argument);
}

TEST_CASE("embedding_lookup gathers rows and accumulates duplicate ids in backward") {
  D table = D::from_data({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31}, true);
  D out = embedding_lookup(table, {{1, 1}});
  CHECK(out.shape() == std::vector<std::size_t>{1, 2, 2});
  CHECK(out.value() == std::vector<double>{10, 11, 10, 11});

  mean_all(out).backward();
  CHECK(table.grad()[2] == doctest::Approx(0.5).epsilon(1e-12));  // row 1 hit twice
  CHECK(table.grad()[3] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(table.grad()[0] == 0.0);
  CHECK(table.grad()[6] == 0.0);

  CHECK_THROWS_AS(embedding_lookup(table, {{4}}), std::invalid_argument);
  CHECK_THROWS_AS(embedding_lookup(table, {{-1}}), std::invalid_argument);
  CHECK_THROWS_AS(embedding_lookup(table, {{0, 1}, {2}}), std::invalid_argument);
}

TEST_CASE("cross_entropy matches the hand-computed mean NLL") {
  D logits = D::from_data({2, 2}, {1, 0, 0, 2}, true);
  D loss = cross_entropy(logits, {0, 1});
  const double p00 = std::exp(1.0) / (std::exp(1.0) + 1.0);
  const double p11 = std::exp(2.0) / (std::exp(2.0) + 1.0);
  const double expected = -(std::log(p00) + std::log(p11)) / 2.0;
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss.item() == doctest::Approx(0.2200948492805977).epsilon(1e-10));

  loss.backward();
  CHECK(logits.grad()[0] == doctest::Approx((p00 - 1.0) / 2.0).epsilon(1e-12));
  CHECK(logits.grad()[1] == doctest::Approx((1.0 - p00) / 2.0).epsilon(1e-12));
  CHECK(logits.grad()[3] == doctest::Approx((p11 - 1.0) / 2.0).epsilon(1e-12));

  CHECK_THROWS_AS(cross_entropy(logits, {0}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(logits, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(D::from_data({2}, {0.0, 1.0}), {0, 1}), std::invalid_argument);
}

TEST_CASE("backward accumulates through shared nodes and resets between calls") {
  D x = D::from_data({2}, {3.0, -2.0}, true);
  D loss = mean_all(add(mul(x, x), x));  // d/dx (x^2 + x) / 2 = (2x + 1) / 2
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-1.5).epsilon(1e-12));
  loss.backward();  // grads are zeroed first, not accumulated across calls
  CHECK(x.grad()[0] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("NoGradGuard stops graph recording") {
  D x = D::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    D y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    D inner = mean_all(y);
    inner.backward();  // no parents recorded, so nothing propagates
    CHECK(x.grad().empty());
  }
  // recording resumes after the guard
  mean_all(mul(x, x)).backward();
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Adam first step matches the bias-corrected closed form") {
  D theta = D::from_data({1}, {1.0}, true);
  D idle = D::from_data({1}, {7.0}, true);
  Adam<double> opt({{"theta", theta}, {"idle", idle}}, 0.1);
  theta.grad().assign(1, 2.0);
  opt.step();
  // m-hat = 2, v-hat = 4: update = lr * 2 / (2 + eps)
  CHECK(theta.value()[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(idle.value()[0] == 7.0);  // no grad buffer, left alone
  CHECK(opt.step_count() == 1);
  CHECK(opt.lr() == 0.1);
  opt.set_lr(0.01);
  CHECK(opt.lr() == 0.01);
}

TEST_CASE("grad_check flags a parameter the graph never saw") {
  D x = D::from_data({2}, {0.4, -0.7}, true);
  auto detached_square = [&x]() {
    // reads current values but rebuilds the tensor, severing the graph
    D snapshot = D::from_data({2}, {x.value()[0], x.value()[1]});
    return mean_all(mul(snapshot, snapshot));
  };
  const auto bad = grad_check(detached_square, {{"x", x}});
  CHECK_FALSE(bad.ok);
  REQUIRE_FALSE(bad.failures.empty());
  CHECK(bad.failures[0].param == "x");
  CHECK(bad.failures[0].analytic == 0.0);

  auto live_square = [&x]() { return mean_all(mul(x, x)); };
  const auto good = grad_check(live_square, {{"x", x}});
  CHECK(good.ok);
  CHECK(good.checked == 2);
  CHECK(good.max_rel_err < 1e-6);
}

TEST_CASE("gradcheck suite passes on every op and model case") {
  const auto cases = run_gradcheck_suite(3);
  REQUIRE(!cases.empty());
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CAPTURE(c.first_failure);
    CHECK(c.ok);
    CHECK(c.checked > 0);
  }
}
