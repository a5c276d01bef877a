#pragma once

#include <cstdint>
#include <span>

#include "syncap/tensor.hpp"

namespace syncap::objectives {

struct LossBreakdown {
  double loss_lang = 0.0;
  double loss_0 = 0.0;
  double loss_m = 0.0;
  double total = 0.0;
  double lambda_0 = 0.0;
  double lambda_m = 0.0;
  double margin = 0.0;
};

// Mean negative log-likelihood of the targets under row-wise softmax of the
// logits. targets must supply one id per logits row; pad positions are the
// caller's to exclude (rows here are all real).
Tensor loss_lang(Tape& tape, const Tensor& logits, std::span<const int> targets);

// m_0 / T_x, anchoring the first decode step near the start of the motion.
Tensor loss_init(Tape& tape, const Tensor& m_0, int64_t t_x);
double loss_init_value(double m_0, int64_t t_x);

// (1/T_x) * sum over consecutive decode steps of max((m_t + margin) -
// m_{t+1}, 0)^2; zero exactly when every step advances by at least margin.
Tensor loss_monotonic(Tape& tape, std::span<const Tensor> centers,
                      double margin, int64_t t_x);
double loss_monotonic_value(std::span<const double> centers, double margin,
                            int64_t t_x);

// total = lang + lambda_0 * l0 + lambda_m * lm, on tape.
Tensor combine(Tape& tape, const Tensor& lang, const Tensor& l0,
               const Tensor& lm, double lambda_0, double lambda_m);

LossBreakdown make_breakdown(double lang, double l0, double lm,
                             double lambda_0, double lambda_m, double margin);

}  // namespace syncap::objectives
