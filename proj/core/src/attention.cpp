#include "syncap/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace syncap {

namespace {

void check_radius(Radius r, const char* what) {
  if (r && *r < 1) {
    throw std::invalid_argument(std::string(what) + " radius must be >= 1, got " +
                                std::to_string(*r));
  }
}

Tensor frame_index_column(int64_t t) {
  std::vector<double> idx(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) idx[static_cast<size_t>(i)] = static_cast<double>(i);
  return Tensor::column(std::move(idx));
}

}  // namespace

void validate_attention_map(const AttentionMap& map) {
  const int64_t t_y = map.beta.rows(), t_x = map.beta.cols();
  if (static_cast<int64_t>(map.centers.size()) != t_y ||
      static_cast<int64_t>(map.windows.size()) != t_y) {
    throw std::invalid_argument("attention map row count mismatch: beta " +
                                map.beta.shape_str() + ", " +
                                std::to_string(map.centers.size()) + " centers, " +
                                std::to_string(map.windows.size()) + " windows");
  }
  for (int64_t t = 0; t < t_y; ++t) {
    const auto [lo, hi] = map.windows[static_cast<size_t>(t)];
    if (lo < 0 || hi >= t_x || lo > hi) {
      throw std::domain_error("attention window [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "] invalid for T_x=" +
                              std::to_string(t_x) + " at row " + std::to_string(t));
    }
    double mass = 0.0, center = 0.0;
    for (int64_t i = 0; i < t_x; ++i) {
      const double b = map.beta.at(t, i);
      if ((i < lo || i > hi) && b != 0.0) {
        throw std::domain_error("attention weight outside window at row " +
                                std::to_string(t) + ", frame " + std::to_string(i));
      }
      mass += b;
      center += static_cast<double>(i) * b;
    }
    if (std::abs(mass - 1.0) > 1e-6) {
      throw std::domain_error("attention row " + std::to_string(t) +
                              " sums to " + std::to_string(mass));
    }
    if (std::abs(center - map.centers[static_cast<size_t>(t)]) > 1e-6) {
      throw std::domain_error("attention center mismatch at row " +
                              std::to_string(t));
    }
  }
}

Tensor attention_window_mask(int64_t t_query, int64_t t_key, Radius r,
                             int64_t t_valid, bool causal) {
  check_radius(r, "self window");
  if (t_valid < 1 || t_valid > t_key) {
    throw std::invalid_argument("t_valid " + std::to_string(t_valid) +
                                " out of range [1, " + std::to_string(t_key) + "]");
  }
  Tensor mask = Tensor::zeros(t_query, t_key);
  for (int64_t i = 0; i < t_query; ++i) {
    int64_t lo = 0, hi = t_valid - 1;
    if (r) {
      lo = std::max<int64_t>(lo, i - *r);
      hi = std::min<int64_t>(hi, i + *r);
    }
    if (causal) hi = std::min<int64_t>(hi, i);
    if (lo > hi) {
      if (i < t_valid) {
        throw std::domain_error("empty attention window at row " +
                                std::to_string(i));
      }
      continue;  // query beyond the valid range attends nowhere
    }
    for (int64_t j = lo; j <= hi; ++j) mask.at_mut(i, j) = 1.0;
  }
  return mask;
}

SelfAttentionResult windowed_self_attention(Tape& tape, const Tensor& x,
                                            const SelfAttentionParams& params,
                                            Radius r, int64_t t_valid,
                                            bool causal) {
  if (params.heads.empty()) {
    throw std::invalid_argument("self attention needs at least one head");
  }
  const int64_t t = x.rows();
  const int64_t d_m = x.cols();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_m));
  Tensor mask = attention_window_mask(t, t, r, t_valid, causal);

  SelfAttentionResult result;
  std::vector<Tensor> head_outputs;
  for (const HeadParams& h : params.heads) {
    Tensor q = add_row_broadcast(tape, matmul(tape, x, h.wq), h.bq);
    Tensor k = add_row_broadcast(tape, matmul(tape, x, h.wk), h.bk);
    Tensor v = add_row_broadcast(tape, matmul(tape, x, h.wv), h.bv);
    Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_scale);
    Tensor alpha = masked_softmax(tape, scores, mask);
    head_outputs.push_back(matmul(tape, alpha, v));
    result.alpha.push_back(alpha);
  }
  Tensor merged = head_outputs.size() == 1 ? head_outputs.front()
                                           : concat_cols(tape, head_outputs);
  if (merged.cols() != params.wo.rows()) {
    throw std::invalid_argument("head concat width " + merged.shape_str() +
                                " does not match W_O " + params.wo.shape_str());
  }
  result.z = matmul(tape, merged, params.wo);
  return result;
}

CrossStepResult controlled_cross_step(Tape& tape, const Tensor& q,
                                      const Tensor& k, const Tensor& v,
                                      Radius d_radius, int64_t t_valid) {
  check_radius(d_radius, "cross window");
  if (q.rows() != 1) {
    throw std::invalid_argument("cross query must be a single row, got " +
                                q.shape_str());
  }
  const int64_t t = k.rows();
  if (t_valid < 1 || t_valid > t) {
    throw std::invalid_argument("t_valid " + std::to_string(t_valid) +
                                " out of range [1, " + std::to_string(t) + "]");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_scale);

  Tensor valid_mask = Tensor::zeros(1, t);
  for (int64_t j = 0; j < t_valid; ++j) valid_mask.at_mut(0, j) = 1.0;

  // Pass 1: provisional distribution over all valid frames places the window.
  Tensor beta_pre = masked_softmax(tape, scores, valid_mask);
  Tensor index_col = frame_index_column(t);
  Tensor m_pre = matmul(tape, beta_pre, index_col);
  const double center_pre = m_pre.item();

  int64_t lo = 0, hi = t_valid - 1;
  if (d_radius) {
    lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(center_pre)) - *d_radius);
    hi = std::min<int64_t>(t_valid - 1,
                           static_cast<int64_t>(std::ceil(center_pre)) + *d_radius);
  }

  // Pass 2: the same scores renormalized inside the realized window.
  Tensor window_mask = Tensor::zeros(1, t);
  for (int64_t j = lo; j <= hi; ++j) window_mask.at_mut(0, j) = 1.0;
  Tensor beta = masked_softmax(tape, scores, window_mask);

  CrossStepResult result;
  result.beta_row = beta;
  result.r_t = matmul(tape, beta, v);
  result.m_t = matmul(tape, beta, index_col);
  result.center = result.m_t.item();
  result.bounds = {lo, hi};
  return result;
}

CrossStepResult cross_attention_controlled(Tape& tape, const Tensor& enc,
                                           const Tensor& u_t,
                                           const CrossAttentionParams& params,
                                           Radius d_radius, int64_t t_valid) {
  Tensor q = add_row_broadcast(tape, matmul(tape, u_t, params.wq), params.bq);
  Tensor k = add_row_broadcast(tape, matmul(tape, enc, params.wk), params.bk);
  Tensor v = add_row_broadcast(tape, matmul(tape, enc, params.wv), params.bv);
  return controlled_cross_step(tape, q, k, v, d_radius, t_valid);
}

Radius receptive_field(Radius r, Radius d_radius) {
  // Accepts radius 0 so degenerate windows can still be sized.
  if ((r && *r < 0) || (d_radius && *d_radius < 0)) {
    throw std::invalid_argument("receptive_field: negative radius");
  }
  if (!r || !d_radius) return std::nullopt;
  return 2 * (*d_radius + *r);
}

}  // namespace syncap
