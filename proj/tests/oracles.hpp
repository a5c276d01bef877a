#pragma once

// Reference implementations the tests compare against. Each is written with
// different data structures and control flow than the library versions so a
// shared bug cannot hide: n-gram tallies keyed by token vectors instead of
// joined strings, a full LCS table instead of two rolling rows, explicit
// frame sets instead of interval arithmetic, and dense loop-nest attention
// instead of tensor ops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

inline double bleu(const std::vector<std::vector<std::string>>& cands,
                   const std::vector<std::vector<std::string>>& refs,
                   int max_n) {
  long long cand_total = 0, ref_total = 0;
  for (size_t i = 0; i < cands.size(); ++i) {
    cand_total += static_cast<long long>(cands[i].size());
    ref_total += static_cast<long long>(refs[i].size());
  }
  if (cand_total == 0) return 0.0;

  double log_acc = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    long long matched = 0, emitted = 0;
    for (size_t i = 0; i < cands.size(); ++i) {
      std::map<std::vector<std::string>, long long> in_cand, in_ref;
      for (size_t s = 0; s + n <= cands[i].size(); ++s) {
        in_cand[{cands[i].begin() + s, cands[i].begin() + s + n}] += 1;
      }
      for (size_t s = 0; s + n <= refs[i].size(); ++s) {
        in_ref[{refs[i].begin() + s, refs[i].begin() + s + n}] += 1;
      }
      for (const auto& [gram, count] : in_cand) {
        emitted += count;
        const auto it = in_ref.find(gram);
        if (it != in_ref.end()) matched += std::min(count, it->second);
      }
    }
    const double p = (matched > 0 && emitted > 0)
                         ? static_cast<double>(matched) / static_cast<double>(emitted)
                         : 1e-9;
    log_acc += std::log(p);
  }
  const double bp = cand_total > ref_total
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_total) /
                                             static_cast<double>(cand_total));
  return bp * std::exp(log_acc / static_cast<double>(max_n));
}

inline double rouge_l_f1(const std::vector<std::string>& cand,
                         const std::vector<std::string>& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<std::vector<int>> table(cand.size() + 1,
                                      std::vector<int>(ref.size() + 1, 0));
  for (size_t i = 1; i <= cand.size(); ++i) {
    for (size_t j = 1; j <= ref.size(); ++j) {
      if (cand[i - 1] == ref[j - 1]) {
        table[i][j] = table[i - 1][j - 1] + 1;
      } else {
        table[i][j] = std::max(table[i - 1][j], table[i][j - 1]);
      }
    }
  }
  const int lcs = table[cand.size()][ref.size()];
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(cand.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

inline std::set<int64_t> frame_set(int64_t lo, int64_t hi) {
  std::set<int64_t> frames;
  for (int64_t f = lo; f <= hi; ++f) frames.insert(f);
  return frames;
}

inline double iou_sets(const std::set<int64_t>& a, const std::set<int64_t>& b) {
  std::set<int64_t> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(inter, inter.begin()));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::inserter(uni, uni.begin()));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double iop_sets(const std::set<int64_t>& pred,
                       const std::set<int64_t>& gt) {
  std::set<int64_t> inter;
  std::set_intersection(pred.begin(), pred.end(), gt.begin(), gt.end(),
                        std::inserter(inter, inter.begin()));
  return static_cast<double>(inter.size()) / static_cast<double>(pred.size());
}

inline bool element_of_sets(const std::vector<double>& beta,
                            const std::set<int64_t>& gt) {
  // Backward scan with >= keeps the first maximum, matching the argmax
  // tie rule of the library.
  size_t peak = beta.size() - 1;
  for (size_t i = beta.size() - 1; i-- > 0;) {
    if (beta[i] >= beta[peak]) peak = i;
  }
  return gt.count(static_cast<int64_t>(peak)) > 0;
}

// Dense single-query softmax attention over an explicit set of allowed key
// indices, all in plain nested loops.
inline std::vector<double> attention_row(
    const std::vector<double>& scores, const std::set<int64_t>& allowed) {
  double max_s = -1e300;
  for (int64_t j : allowed) max_s = std::max(max_s, scores[static_cast<size_t>(j)]);
  double denom = 0.0;
  for (int64_t j : allowed) {
    denom += std::exp(scores[static_cast<size_t>(j)] - max_s);
  }
  std::vector<double> row(scores.size(), 0.0);
  for (int64_t j : allowed) {
    row[static_cast<size_t>(j)] =
        std::exp(scores[static_cast<size_t>(j)] - max_s) / denom;
  }
  return row;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b[0].size(); ++j) {
      double acc = 0.0;
      for (size_t k = 0; k < b.size(); ++k) acc += a[i][k] * b[k][j];
      out[i][j] = acc;
    }
  }
  return out;
}

inline Matrix add_bias(const Matrix& a, const std::vector<double>& bias) {
  Matrix out = a;
  for (auto& row : out) {
    for (size_t j = 0; j < bias.size(); ++j) row[j] += bias[j];
  }
  return out;
}

// Full single-head attention with every key visible, scores scaled by the
// given factor. Returns the attended values.
inline Matrix dense_attention(const Matrix& q, const Matrix& k,
                              const Matrix& v, double scale) {
  Matrix out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (size_t i = 0; i < q.size(); ++i) {
    std::vector<double> scores(k.size(), 0.0);
    for (size_t j = 0; j < k.size(); ++j) {
      double acc = 0.0;
      for (size_t d = 0; d < q[i].size(); ++d) acc += q[i][d] * k[j][d];
      scores[j] = acc * scale;
    }
    std::set<int64_t> all;
    for (size_t j = 0; j < k.size(); ++j) all.insert(static_cast<int64_t>(j));
    const auto weights = attention_row(scores, all);
    for (size_t j = 0; j < k.size(); ++j) {
      for (size_t d = 0; d < v[j].size(); ++d) {
        out[i][d] += weights[j] * v[j][d];
      }
    }
  }
  return out;
}

}  // namespace oracle
