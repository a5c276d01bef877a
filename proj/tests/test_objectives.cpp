#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "syncap/objectives.hpp"
#include "syncap/rng.hpp"
#include "syncap/tensor.hpp"

using namespace syncap;
namespace obj = syncap::objectives;

TEST_CASE("uniform logits cost exactly log V per token") {
  Tensor logits = Tensor::zeros(2, 4);
  const std::vector<int> targets = {1, 3};
  Tape tape;
  Tensor loss = obj::loss_lang(tape, logits, targets);
  CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Shifting a row by a constant cannot change the softmax.
  Tensor shifted = Tensor::from_vector({5.0, 5.0, 5.0, 5.0, -2.0, -2.0, -2.0, -2.0}, 2, 4);
  Tape t2;
  Tensor same = obj::loss_lang(t2, shifted, targets);
  CHECK(same.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor confident = Tensor::zeros(1, 4);
  confident.at_mut(0, 2) = 30.0;
  const std::vector<int> hit = {2};
  Tape t3;
  CHECK(obj::loss_lang(t3, confident, hit).item() ==
        doctest::Approx(0.0).epsilon(1e-9));

  const std::vector<int> short_targets = {1};
  Tape t4;
  CHECK_THROWS_AS(obj::loss_lang(t4, logits, short_targets),
                  std::invalid_argument);
}

TEST_CASE("loss_lang averages rows and backpropagates") {
  Rng rng(60);
  std::vector<double> vals(3 * 5);
  for (double& v : vals) v = rng.uniform(-2.0, 2.0);
  Tensor logits = Tensor::from_vector(std::move(vals), 3, 5, true);
  const std::vector<int> targets = {4, 0, 2};

  // Mean of per-row negative log-probabilities, computed by hand.
  double expect = 0.0;
  for (int64_t i = 0; i < 3; ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 1; j < 5; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (int64_t j = 0; j < 5; ++j) denom += std::exp(logits.at(i, j) - mx);
    const double lp = logits.at(i, targets[static_cast<size_t>(i)]) - mx -
                      std::log(denom);
    expect -= lp;
  }
  expect /= 3.0;

  Tape tape;
  Tensor loss = obj::loss_lang(tape, logits, targets);
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));

  std::vector<Tensor> inputs = {logits};
  const double err = grad_check_many(
      [&](Tape& t) { return obj::loss_lang(t, logits, targets); }, inputs, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("initialization loss is the normalized first center") {
  Tape tape;
  Tensor m0 = Tensor::scalar(25.0);
  CHECK(obj::loss_init(tape, m0, 50).item() == 0.5);
  CHECK(obj::loss_init_value(25.0, 50) == 0.5);
  CHECK(obj::loss_init_value(99.0, 100) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(obj::loss_init_value(0.0, 7) == 0.0);

  CHECK_THROWS_AS(obj::loss_init_value(-0.5, 50), std::domain_error);
  CHECK_THROWS_AS(obj::loss_init_value(49.5, 50), std::domain_error);
  CHECK_THROWS_AS(obj::loss_init_value(3.0, 0), std::invalid_argument);

  Tensor m = Tensor::scalar(12.0, true);
  Tape t2;
  Tensor loss = obj::loss_init(t2, m, 48);
  t2.backward(loss);
  CHECK(m.grad()[0] == doctest::Approx(1.0 / 48.0).epsilon(1e-12));
}

TEST_CASE("monotonicity loss matches the hand-computed hinge") {
  // Centers 3 then 2 with margin 1: hinge (3 + 1 - 2) = 2, squared 4, over
  // T_x = 10 gives 0.4.
  const std::vector<double> back = {3.0, 2.0};
  CHECK(obj::loss_monotonic_value(back, 1.0, 10) ==
        doctest::Approx(0.4).epsilon(1e-12));

  const std::vector<double> spaced = {0.0, 1.5, 3.0};
  CHECK(obj::loss_monotonic_value(spaced, 1.0, 10) == 0.0);

  // Advancing by exactly the margin sits on the hinge boundary at zero.
  const std::vector<double> exact = {0.0, 1.0, 2.0};
  CHECK(obj::loss_monotonic_value(exact, 1.0, 10) == 0.0);

  const std::vector<double> single = {5.0};
  CHECK(obj::loss_monotonic_value(single, 1.0, 10) == 0.0);

  const std::vector<double> slight = {0.0, 0.5};
  CHECK(obj::loss_monotonic_value(slight, 1.0, 10) ==
        doctest::Approx(0.025).epsilon(1e-12));

  CHECK_THROWS_AS(obj::loss_monotonic_value({}, 1.0, 10),
                  std::invalid_argument);
  CHECK_THROWS_AS(obj::loss_monotonic_value(back, 1.0, 0),
                  std::invalid_argument);
}

TEST_CASE("tape and value monotonicity losses agree") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 2 + static_cast<size_t>(rng.uniform_int(0, 6));
    std::vector<double> centers(n);
    centers[0] = rng.uniform(0.0, 5.0);
    for (size_t i = 1; i < n; ++i) {
      centers[i] = centers[i - 1] + rng.uniform(-2.0, 3.0);
    }
    std::vector<Tensor> tens;
    for (double c : centers) tens.push_back(Tensor::scalar(c));
    Tape tape;
    Tensor loss = obj::loss_monotonic(tape, tens, 1.0, 20);
    CHECK(loss.item() ==
          doctest::Approx(obj::loss_monotonic_value(centers, 1.0, 20))
              .epsilon(1e-12));
  }
}

TEST_CASE("monotonicity loss separates compliant from violating sequences") {
  Rng rng(62);
  const double margin = 1.0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 2 + static_cast<size_t>(rng.uniform_int(0, 8));
    std::vector<double> ok(n), bad(n);
    ok[0] = bad[0] = rng.uniform(0.0, 10.0);
    for (size_t i = 1; i < n; ++i) {
      ok[i] = ok[i - 1] + margin + rng.uniform(0.0, 2.0);
      bad[i] = bad[i - 1] + margin + rng.uniform(0.0, 2.0);
    }
    const size_t hit = 1 + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n) - 2));
    bad[hit] = bad[hit - 1] + margin - rng.uniform(0.1, 1.5);

    CHECK(obj::loss_monotonic_value(ok, margin, 30) == 0.0);
    CHECK(obj::loss_monotonic_value(bad, margin, 30) > 0.0);
  }
}

TEST_CASE("monotonicity gradients pass finite differences") {
  Rng rng(63);
  std::vector<Tensor> centers;
  double prev = 2.0;
  for (int i = 0; i < 5; ++i) {
    // Mix of clear violations and clear advances keeps the hinge away from
    // its kink so the central difference is valid.
    prev += (i % 2 == 0) ? -0.7 : 2.3;
    centers.push_back(Tensor::scalar(prev, true));
  }
  const double err = grad_check_many(
      [&](Tape& tape) {
        return obj::loss_monotonic(tape, centers, 1.0, 12);
      },
      centers, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("combine applies both weights on tape") {
  Tape tape;
  Tensor lang = Tensor::scalar(1.0, true);
  Tensor l0 = Tensor::scalar(0.5, true);
  Tensor lm = Tensor::scalar(0.001, true);
  Tensor total = obj::combine(tape, lang, l0, lm, 0.1, 1000.0);
  CHECK(total.item() == doctest::Approx(2.05).epsilon(1e-12));

  tape.backward(total);
  CHECK(lang.grad()[0] == 1.0);
  CHECK(l0.grad()[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lm.grad()[0] == doctest::Approx(1000.0).epsilon(1e-15));
}

TEST_CASE("breakdown mirrors the combined total") {
  const obj::LossBreakdown b = obj::make_breakdown(1.2, 0.3, 0.004, 0.1, 1000.0, 1.0);
  CHECK(b.loss_lang == 1.2);
  CHECK(b.loss_0 == 0.3);
  CHECK(b.loss_m == 0.004);
  CHECK(b.lambda_0 == 0.1);
  CHECK(b.lambda_m == 1000.0);
  CHECK(b.margin == 1.0);
  CHECK(b.total == doctest::Approx(1.2 + 0.03 + 4.0).epsilon(1e-12));
}
