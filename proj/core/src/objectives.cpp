#include "syncap/objectives.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace syncap::objectives {

namespace {

void check_t_x(int64_t t_x) {
  if (t_x < 1) {
    throw std::invalid_argument("T_x must be >= 1, got " + std::to_string(t_x));
  }
}

void check_center(double m_0, int64_t t_x) {
  if (!(m_0 >= -1e-9 && m_0 <= static_cast<double>(t_x - 1) + 1e-9)) {
    throw std::domain_error("alignment center " + std::to_string(m_0) +
                            " outside [0, " + std::to_string(t_x - 1) + "]");
  }
}

}  // namespace

Tensor loss_lang(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  if (static_cast<int64_t>(targets.size()) != logits.rows()) {
    throw std::invalid_argument("need one target per logits row: " +
                                std::to_string(targets.size()) + " targets vs " +
                                logits.shape_str());
  }
  Tensor logp = log_softmax_rows(tape, logits);
  Tensor picked = pick_per_row(tape, logp, targets);
  return scale(tape, sum(tape, picked),
               -1.0 / static_cast<double>(targets.size()));
}

Tensor loss_init(Tape& tape, const Tensor& m_0, int64_t t_x) {
  check_t_x(t_x);
  check_center(m_0.item(), t_x);
  return scale(tape, m_0, 1.0 / static_cast<double>(t_x));
}

double loss_init_value(double m_0, int64_t t_x) {
  check_t_x(t_x);
  check_center(m_0, t_x);
  return m_0 / static_cast<double>(t_x);
}

Tensor loss_monotonic(Tape& tape, std::span<const Tensor> centers,
                      double margin, int64_t t_x) {
  check_t_x(t_x);
  if (centers.empty()) {
    throw std::invalid_argument("loss_monotonic needs at least one center");
  }
  if (centers.size() == 1) return Tensor::scalar(0.0);
  Tensor acc;
  for (size_t t = 0; t + 1 < centers.size(); ++t) {
    Tensor gap = add_const(tape, sub(tape, centers[t], centers[t + 1]), margin);
    Tensor term = square(tape, relu(tape, gap));
    acc = acc.defined() ? add(tape, acc, term) : term;
  }
  return scale(tape, acc, 1.0 / static_cast<double>(t_x));
}

double loss_monotonic_value(std::span<const double> centers, double margin,
                            int64_t t_x) {
  check_t_x(t_x);
  if (centers.empty()) {
    throw std::invalid_argument("loss_monotonic needs at least one center");
  }
  double acc = 0.0;
  for (size_t t = 0; t + 1 < centers.size(); ++t) {
    const double gap = std::max(centers[t] + margin - centers[t + 1], 0.0);
    acc += gap * gap;
  }
  return acc / static_cast<double>(t_x);
}

Tensor combine(Tape& tape, const Tensor& lang, const Tensor& l0,
               const Tensor& lm, double lambda_0, double lambda_m) {
  return add(tape, add(tape, lang, scale(tape, l0, lambda_0)),
             scale(tape, lm, lambda_m));
}

LossBreakdown make_breakdown(double lang, double l0, double lm,
                             double lambda_0, double lambda_m, double margin) {
  LossBreakdown b;
  b.loss_lang = lang;
  b.loss_0 = l0;
  b.loss_m = lm;
  b.lambda_0 = lambda_0;
  b.lambda_m = lambda_m;
  b.margin = margin;
  b.total = lang + lambda_0 * l0 + lambda_m * lm;
  return b;
}

}  // namespace syncap::objectives
