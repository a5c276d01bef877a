#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "syncap/attention.hpp"
#include "syncap/rng.hpp"
#include "syncap/tensor.hpp"

using namespace syncap;

namespace {

Tensor random_tensor(Rng& rng, int64_t rows, int64_t cols,
                     bool requires_grad = false) {
  std::vector<double> v(static_cast<size_t>(rows * cols));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_vector(std::move(v), rows, cols, requires_grad);
}

HeadParams random_head(Rng& rng, int64_t d_m, int64_t d_h, bool grad = false) {
  HeadParams h;
  h.wq = random_tensor(rng, d_m, d_h, grad);
  h.bq = random_tensor(rng, 1, d_h, grad);
  h.wk = random_tensor(rng, d_m, d_h, grad);
  h.bk = random_tensor(rng, 1, d_h, grad);
  h.wv = random_tensor(rng, d_m, d_h, grad);
  h.bv = random_tensor(rng, 1, d_h, grad);
  return h;
}

SelfAttentionParams random_self(Rng& rng, int64_t d_m, int64_t n_h,
                                bool grad = false) {
  SelfAttentionParams p;
  for (int64_t h = 0; h < n_h; ++h) {
    p.heads.push_back(random_head(rng, d_m, d_m / n_h, grad));
  }
  p.wo = random_tensor(rng, d_m, d_m, grad);
  return p;
}

CrossAttentionParams random_cross(Rng& rng, int64_t d_m, bool grad = false) {
  CrossAttentionParams p;
  p.wq = random_tensor(rng, d_m, d_m, grad);
  p.bq = random_tensor(rng, 1, d_m, grad);
  p.wk = random_tensor(rng, d_m, d_m, grad);
  p.bk = random_tensor(rng, 1, d_m, grad);
  p.wv = random_tensor(rng, d_m, d_m, grad);
  p.bv = random_tensor(rng, 1, d_m, grad);
  return p;
}

}  // namespace

TEST_CASE("window mask structure with radius, padding, and causality") {
  Tensor mask = attention_window_mask(5, 5, 1, 5, false);
  for (int64_t i = 0; i < 5; ++i) {
    for (int64_t j = 0; j < 5; ++j) {
      CHECK(mask.at(i, j) == (std::abs(i - j) <= 1 ? 1.0 : 0.0));
    }
  }
  CHECK(mask.at(0, 3) == 0.0);

  Tensor padded = attention_window_mask(3, 8, std::nullopt, 6, false);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(padded.at(i, 5) == 1.0);
    CHECK(padded.at(i, 6) == 0.0);
    CHECK(padded.at(i, 7) == 0.0);
  }

  Tensor causal = attention_window_mask(4, 4, std::nullopt, 4, true);
  for (int64_t i = 0; i < 4; ++i) {
    for (int64_t j = 0; j < 4; ++j) {
      CHECK(causal.at(i, j) == (j <= i ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("window mask rejects bad radii and handles rows past t_valid") {
  // A query inside the valid range always sees itself, so rows below t_valid
  // are never empty. Padding rows clamp into the valid tail while their
  // radius still reaches it and go all-zero once it cannot.
  Tensor mask = attention_window_mask(5, 5, 1, 3, false);
  for (int64_t j = 0; j < 5; ++j) {
    CHECK(mask.at(3, j) == (j == 2 ? 1.0 : 0.0));
    CHECK(mask.at(4, j) == 0.0);
  }
  CHECK(mask.at(2, 2) == 1.0);
  CHECK_THROWS_AS(attention_window_mask(3, 3, 0, 3, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(attention_window_mask(3, 3, -2, 3, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(attention_window_mask(3, 3, 1, 0, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(attention_window_mask(3, 3, 1, 4, false),
                  std::invalid_argument);
}

TEST_CASE("single-token self-attention is the identity weighting") {
  Rng rng(21);
  const int64_t d_m = 8;
  auto params = random_self(rng, d_m, 2);
  Tensor x = random_tensor(rng, 1, d_m);
  Tape tape;
  auto res = windowed_self_attention(tape, x, params, std::nullopt, 1, false);
  REQUIRE(res.alpha.size() == 2);
  for (const Tensor& alpha : res.alpha) {
    CHECK(alpha.rows() == 1);
    CHECK(alpha.item() == 1.0);
  }

  // With alpha pinned at 1, the output is exactly concat_h(v_h) * W_O.
  Tape check;
  std::vector<Tensor> vs;
  for (const auto& h : params.heads) {
    vs.push_back(add_row_broadcast(check, matmul(check, x, h.wv), h.bv));
  }
  Tensor v = concat_cols(check, vs);
  Tensor expect = matmul(check, v, params.wo);
  for (int64_t j = 0; j < d_m; ++j) {
    CHECK(res.z.at(0, j) == doctest::Approx(expect.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("radius-1 attention is exactly zero outside the tridiagonal") {
  Rng rng(22);
  const int64_t t = 5, d_m = 8;
  auto params = random_self(rng, d_m, 2);
  Tensor x = random_tensor(rng, t, d_m);
  Tape tape;
  auto res = windowed_self_attention(tape, x, params, 1, t, false);
  for (const Tensor& alpha : res.alpha) {
    CHECK(alpha.at(0, 3) == 0.0);
    for (int64_t i = 0; i < t; ++i) {
      double row_sum = 0.0;
      for (int64_t j = 0; j < t; ++j) {
        if (std::abs(i - j) > 1) CHECK(alpha.at(i, j) == 0.0);
        row_sum += alpha.at(i, j);
      }
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("perturbations outside the window leave outputs bitwise unchanged") {
  Rng rng(23);
  const int64_t t = 40, d_m = 8, r = 5, j_hit = 20;
  auto params = random_self(rng, d_m, 2);
  Tensor x = random_tensor(rng, t, d_m);

  Tape tape_a;
  auto base = windowed_self_attention(tape_a, x, params, r, t, false);

  Tensor x2 = Tensor::from_vector(
      std::vector<double>(x.values().begin(), x.values().end()), t, d_m);
  for (int64_t j = 0; j < d_m; ++j) x2.at_mut(j_hit, j) += 0.37;
  Tape tape_b;
  auto moved = windowed_self_attention(tape_b, x2, params, r, t, false);

  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < d_m; ++j) {
      if (std::abs(i - j_hit) > r) {
        CHECK(base.z.at(i, j) == moved.z.at(i, j));
      }
    }
    if (std::abs(i - j_hit) <= r) {
      bool any_diff = false;
      for (int64_t j = 0; j < d_m; ++j) {
        if (base.z.at(i, j) != moved.z.at(i, j)) any_diff = true;
      }
      CHECK(any_diff);
    }
  }
}

TEST_CASE("unbounded single-head attention matches the dense oracle") {
  Rng rng(24);
  const int64_t t = 7, d_m = 6;
  auto params = random_self(rng, d_m, 1);
  Tensor x = random_tensor(rng, t, d_m);
  Tape tape;
  auto res = windowed_self_attention(tape, x, params, std::nullopt, t, false);

  const auto to_matrix = [](const Tensor& m) {
    oracle::Matrix out(static_cast<size_t>(m.rows()),
                       std::vector<double>(static_cast<size_t>(m.cols())));
    for (int64_t i = 0; i < m.rows(); ++i) {
      for (int64_t j = 0; j < m.cols(); ++j) {
        out[static_cast<size_t>(i)][static_cast<size_t>(j)] = m.at(i, j);
      }
    }
    return out;
  };
  const auto bias_row = [](const Tensor& m) {
    std::vector<double> out(static_cast<size_t>(m.cols()));
    for (int64_t j = 0; j < m.cols(); ++j) out[static_cast<size_t>(j)] = m.at(0, j);
    return out;
  };

  const auto& h = params.heads.front();
  const auto q = oracle::add_bias(oracle::matmul(to_matrix(x), to_matrix(h.wq)),
                                  bias_row(h.bq));
  const auto k = oracle::add_bias(oracle::matmul(to_matrix(x), to_matrix(h.wk)),
                                  bias_row(h.bk));
  const auto v = oracle::add_bias(oracle::matmul(to_matrix(x), to_matrix(h.wv)),
                                  bias_row(h.bv));
  const auto attended =
      oracle::dense_attention(q, k, v, 1.0 / std::sqrt(static_cast<double>(d_m)));
  const auto z = oracle::matmul(attended, to_matrix(params.wo));

  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j < d_m; ++j) {
      CHECK(res.z.at(i, j) ==
            doctest::Approx(z[static_cast<size_t>(i)][static_cast<size_t>(j)])
                .epsilon(1e-9));
    }
  }
}

TEST_CASE("uniform cross scores with unbounded window center at the middle") {
  Rng rng(25);
  const int64_t t_x = 9, d_m = 4;
  Tensor q = Tensor::zeros(1, d_m);
  Tensor k = random_tensor(rng, t_x, d_m);
  Tensor v = random_tensor(rng, t_x, d_m);
  Tape tape;
  auto res = controlled_cross_step(tape, q, k, v, std::nullopt, t_x);
  for (int64_t i = 0; i < t_x; ++i) {
    CHECK(res.beta_row.at(0, i) ==
          doctest::Approx(1.0 / static_cast<double>(t_x)).epsilon(1e-12));
  }
  CHECK(res.center ==
        doctest::Approx(static_cast<double>(t_x - 1) / 2.0).epsilon(1e-9));
  CHECK(res.bounds[0] == 0);
  CHECK(res.bounds[1] == t_x - 1);
}

TEST_CASE("concentrated provisional attention pins the window and center") {
  Rng rng(26);
  const int64_t t_x = 12, d_m = 4;
  Tensor q = Tensor::row({30.0, 0.0, 0.0, 0.0});
  Tensor k = Tensor::zeros(t_x, d_m);
  k.at_mut(5, 0) = 10.0;  // only frame 5 scores above zero, overwhelmingly
  Tensor v = random_tensor(rng, t_x, d_m);
  Tape tape;
  auto res = controlled_cross_step(tape, q, k, v, 2, t_x);
  CHECK(res.bounds[0] == 3);
  CHECK(res.bounds[1] == 7);
  CHECK(res.beta_row.at(0, 5) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.center == doctest::Approx(5.0).epsilon(1e-6));
  for (int64_t j = 0; j < d_m; ++j) {
    CHECK(res.r_t.at(0, j) == doctest::Approx(v.at(5, j)).epsilon(1e-6));
  }
}

TEST_CASE("two-spike provisional distribution reproduces the hand center") {
  // Provisional weights 0.25 at frame 2 and 0.75 at frame 6 give
  // m~ = 0.25*2 + 0.75*6 = 5, so D=10 clips the window to [0, 15].
  const int64_t t_x = 20, d_m = 2;
  const double w2 = 0.25, w6 = 0.75;
  // Scores s2 = 0 and s6 = ln 3 make softmax({s2, s6}) = {0.25, 0.75}; all
  // other frames score -1e9 and vanish.
  std::vector<double> key_vals(static_cast<size_t>(t_x * d_m), 0.0);
  Tensor k = Tensor::from_vector(std::move(key_vals), t_x, d_m);
  const double scale = std::sqrt(static_cast<double>(d_m));
  for (int64_t i = 0; i < t_x; ++i) k.at_mut(i, 0) = -1e9 / scale;
  k.at_mut(2, 0) = 0.0;
  // Shave 1e-10 off ln 3 so the realized center lands just below 5 and its
  // floor and ceil stay stable under rounding; the weights move by under 1e-10.
  k.at_mut(6, 0) = (std::log(3.0) - 1e-10) / scale;
  Tensor q = Tensor::row({scale * scale, 0.0});  // q . k / sqrt(d) = k0 * scale
  Tensor v = Tensor::zeros(t_x, d_m);
  for (int64_t i = 0; i < t_x; ++i) v.at_mut(i, 0) = static_cast<double>(i);

  Tape tape;
  auto res = controlled_cross_step(tape, q, k, v, 10, t_x);
  CHECK(res.bounds[0] == 0);
  CHECK(res.bounds[1] == 15);
  CHECK(res.beta_row.at(0, 2) == doctest::Approx(w2).epsilon(1e-9));
  CHECK(res.beta_row.at(0, 6) == doctest::Approx(w6).epsilon(1e-9));
  CHECK(res.center == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(res.m_t.item() == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("cross attention is zero outside the realized window") {
  Rng rng(27);
  const int64_t t_x = 30, d_m = 8;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = random_tensor(rng, 1, d_m);
    Tensor k = random_tensor(rng, t_x, d_m);
    Tensor v = random_tensor(rng, t_x, d_m);
    Tape tape;
    auto res = controlled_cross_step(tape, q, k, v, 4, t_x);
    double row_sum = 0.0, center = 0.0;
    for (int64_t i = 0; i < t_x; ++i) {
      const double b = res.beta_row.at(0, i);
      if (i < res.bounds[0] || i > res.bounds[1]) CHECK(b == 0.0);
      row_sum += b;
      center += static_cast<double>(i) * b;
    }
    CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.center == doctest::Approx(center).epsilon(1e-6));
    CHECK(res.center >= 0.0);
    CHECK(res.center <= static_cast<double>(t_x - 1));
  }
}

TEST_CASE("cross attention with padding ignores padded frames") {
  Rng rng(28);
  const int64_t t_x = 16, valid = 10, d_m = 4;
  Tensor q = random_tensor(rng, 1, d_m);
  Tensor k = random_tensor(rng, t_x, d_m);
  Tensor v = random_tensor(rng, t_x, d_m);
  Tape tape;
  auto res = controlled_cross_step(tape, q, k, v, std::nullopt, valid);
  for (int64_t i = valid; i < t_x; ++i) {
    CHECK(res.beta_row.at(0, i) == 0.0);
  }
  CHECK(res.bounds[1] <= valid - 1);
}

TEST_CASE("cross attention gradients pass finite differences") {
  Rng rng(29);
  const int64_t t_x = 10, d_m = 6;
  Tensor q = random_tensor(rng, 1, d_m, true);
  Tensor k = random_tensor(rng, t_x, d_m, true);
  Tensor v = random_tensor(rng, t_x, d_m, true);
  std::vector<Tensor> inputs = {q, k, v};

  const double err_r = grad_check_many(
      [&](Tape& tape) {
        auto res = controlled_cross_step(tape, q, k, v, 3, t_x);
        return sum(tape, square(tape, res.r_t));
      },
      inputs, 1e-5);
  CHECK(err_r < 1e-4);

  const double err_m = grad_check_many(
      [&](Tape& tape) {
        auto res = controlled_cross_step(tape, q, k, v, 3, t_x);
        return square(tape, res.m_t);
      },
      inputs, 1e-5);
  CHECK(err_m < 1e-4);
}

TEST_CASE("projection wrapper agrees with the primitive step") {
  Rng rng(30);
  const int64_t t_x = 8, d_m = 6;
  auto params = random_cross(rng, d_m);
  Tensor enc = random_tensor(rng, t_x, d_m);
  Tensor u = random_tensor(rng, 1, d_m);

  Tape tape;
  auto wrapped = cross_attention_controlled(tape, enc, u, params, 2, t_x);

  Tape manual;
  Tensor q = add_row_broadcast(manual, matmul(manual, u, params.wq), params.bq);
  Tensor k = add_row_broadcast(manual, matmul(manual, enc, params.wk), params.bk);
  Tensor v = add_row_broadcast(manual, matmul(manual, enc, params.wv), params.bv);
  auto direct = controlled_cross_step(manual, q, k, v, 2, t_x);

  CHECK(wrapped.center == direct.center);
  CHECK(wrapped.bounds == direct.bounds);
  for (int64_t j = 0; j < d_m; ++j) {
    CHECK(wrapped.r_t.at(0, j) == direct.r_t.at(0, j));
  }
}

TEST_CASE("attention map validation accepts traces and rejects corruption") {
  Rng rng(31);
  const int64_t t_x = 14, d_m = 4;
  AttentionMap map;
  std::vector<double> rows;
  for (int step = 0; step < 3; ++step) {
    Tensor q = random_tensor(rng, 1, d_m);
    Tensor k = random_tensor(rng, t_x, d_m);
    Tensor v = random_tensor(rng, t_x, d_m);
    Tape tape;
    auto res = controlled_cross_step(tape, q, k, v, 3, t_x);
    for (int64_t i = 0; i < t_x; ++i) rows.push_back(res.beta_row.at(0, i));
    map.centers.push_back(res.center);
    map.windows.push_back(res.bounds);
  }
  map.beta = Tensor::from_vector(std::move(rows), 3, t_x);
  CHECK_NOTHROW(validate_attention_map(map));

  AttentionMap bad = map;
  bad.centers[1] += 0.5;
  CHECK_THROWS_AS(validate_attention_map(bad), std::domain_error);

  AttentionMap ragged = map;
  ragged.centers.pop_back();
  CHECK_THROWS_AS(validate_attention_map(ragged), std::invalid_argument);
}

TEST_CASE("receptive field follows 2(D+r) with the unbounded sentinel") {
  CHECK(receptive_field(10, 10) == Radius{40});
  CHECK(receptive_field(0, 5) == Radius{10});
  CHECK(receptive_field(20, 20) == Radius{80});
  CHECK(receptive_field(std::nullopt, 5) == std::nullopt);
  CHECK(receptive_field(5, std::nullopt) == std::nullopt);
  CHECK_THROWS_AS(receptive_field(-1, 5), std::invalid_argument);
}
