#include "syncap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace syncap::metrics {

namespace {

constexpr double kPrecisionFloor = 1e-9;

std::unordered_map<std::string, int64_t> ngram_counts(
    const std::vector<std::string>& words, int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (size_t i = 0; i + n <= words.size(); ++i) {
    std::string key = words[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += words[i + static_cast<size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

void check_interval(Interval v, const char* what) {
  if (v.start < 0 || v.end < v.start) {
    throw std::invalid_argument(std::string(what) + " interval [" +
                                std::to_string(v.start) + ", " +
                                std::to_string(v.end) + "] is invalid");
  }
}

int64_t interval_len(Interval v) { return v.end - v.start + 1; }

int64_t intersection_len(Interval a, Interval b) {
  return std::max<int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start) + 1);
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references,
            int max_n) {
  if (max_n < 1 || max_n > 4) {
    throw std::invalid_argument("bleu: max_n must be in [1, 4], got " +
                                std::to_string(max_n));
  }
  if (candidates.size() != references.size() || candidates.empty()) {
    throw std::invalid_argument("bleu: need equally many candidates and "
                                "references, got " +
                                std::to_string(candidates.size()) + " and " +
                                std::to_string(references.size()));
  }
  int64_t cand_len = 0, ref_len = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) {
      throw std::invalid_argument("bleu: empty reference at index " +
                                  std::to_string(i));
    }
    cand_len += static_cast<int64_t>(candidates[i].size());
    ref_len += static_cast<int64_t>(references[i].size());
  }
  if (cand_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    int64_t clipped = 0, total = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      total += std::max<int64_t>(
          0, static_cast<int64_t>(candidates[i].size()) - n + 1);
      auto cand_counts = ngram_counts(candidates[i], n);
      auto ref_counts = ngram_counts(references[i], n);
      for (const auto& [key, count] : cand_counts) {
        auto it = ref_counts.find(key);
        if (it != ref_counts.end()) clipped += std::min(count, it->second);
      }
    }
    const double p = (clipped > 0 && total > 0)
                         ? static_cast<double>(clipped) / static_cast<double>(total)
                         : kPrecisionFloor;
    log_sum += std::log(p);
  }
  const double bp =
      cand_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
  const size_t m = candidate.size(), n = reference.size();
  if (m == 0 || n == 0) return 0.0;
  std::vector<int64_t> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1]
                   ? prev[j - 1] + 1
                   : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(m);
  const double r = lcs / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

int64_t argmax_index(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("argmax of empty row");
  int64_t best = 0;
  for (size_t i = 1; i < weights.size(); ++i) {
    if (weights[i] > weights[static_cast<size_t>(best)]) {
      best = static_cast<int64_t>(i);
    }
  }
  return best;
}

bool element_of(std::span<const double> beta_row, Interval gt) {
  check_interval(gt, "ground truth");
  const int64_t peak = argmax_index(beta_row);
  return peak >= gt.start && peak <= gt.end;
}

Interval predicted_interval(std::span<const double> beta_row, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("tau must lie in (0, 1], got " +
                                std::to_string(tau));
  }
  const int64_t n = static_cast<int64_t>(beta_row.size());
  const int64_t peak = argmax_index(beta_row);
  int64_t lo = peak, hi = peak;
  double mass = beta_row[static_cast<size_t>(peak)];
  while (mass < tau && (lo > 0 || hi < n - 1)) {
    const double left = lo > 0 ? beta_row[static_cast<size_t>(lo - 1)]
                               : -std::numeric_limits<double>::infinity();
    const double right = hi < n - 1 ? beta_row[static_cast<size_t>(hi + 1)]
                                    : -std::numeric_limits<double>::infinity();
    if (left >= right) {
      mass += beta_row[static_cast<size_t>(--lo)];
    } else {
      mass += beta_row[static_cast<size_t>(++hi)];
    }
  }
  // Greedy growth can overshoot; drop endpoints that are not needed for
  // the mass threshold or the argmax.
  while (true) {
    const bool can_lo = lo < peak && mass - beta_row[static_cast<size_t>(lo)] >= tau;
    const bool can_hi = hi > peak && mass - beta_row[static_cast<size_t>(hi)] >= tau;
    if (!can_lo && !can_hi) break;
    bool drop_lo = can_lo;
    if (can_lo && can_hi) {
      drop_lo = beta_row[static_cast<size_t>(lo)] < beta_row[static_cast<size_t>(hi)];
    }
    if (drop_lo) {
      mass -= beta_row[static_cast<size_t>(lo++)];
    } else {
      mass -= beta_row[static_cast<size_t>(hi--)];
    }
  }
  return {lo, hi};
}

double iou(Interval a, Interval b) {
  check_interval(a, "first");
  check_interval(b, "second");
  const int64_t inter = intersection_len(a, b);
  const int64_t uni = interval_len(a) + interval_len(b) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iop(Interval pred, Interval gt) {
  check_interval(pred, "prediction");
  check_interval(gt, "ground truth");
  return static_cast<double>(intersection_len(pred, gt)) /
         static_cast<double>(interval_len(pred));
}

SyncReport evaluate_sync(const std::vector<SyncInput>& inputs,
                         const std::vector<std::string>& keywords, double tau) {
  int64_t total_segments = 0;
  for (const SyncInput& in : inputs) {
    total_segments += static_cast<int64_t>(in.segments.size());
  }
  if (total_segments == 0) {
    throw std::invalid_argument("evaluate_sync: no segments to score");
  }
  const std::unordered_set<std::string> keyword_set(keywords.begin(),
                                                    keywords.end());

  SyncReport report;
  report.tau = tau;
  double sum_iou = 0.0, sum_iop = 0.0;
  int64_t hits = 0;
  for (const SyncInput& in : inputs) {
    if (in.segments.empty()) continue;
    if (static_cast<int64_t>(in.words.size()) != in.map.beta.rows()) {
      throw std::invalid_argument("sample " + in.id + ": " +
                                  std::to_string(in.words.size()) +
                                  " words vs " +
                                  std::to_string(in.map.beta.rows()) +
                                  " attention rows");
    }
    SampleScore sample;
    sample.id = in.id;
    size_t cursor = 0;
    for (const data::Segment& seg : in.segments) {
      WordScore ws;
      ws.sample_id = in.id;
      ws.word = seg.label;
      ws.gt = {seg.frame_span[0], seg.frame_span[1]};
      int64_t found = -1;
      for (size_t w = cursor; w < in.words.size(); ++w) {
        if (in.words[w] == seg.label && keyword_set.count(in.words[w])) {
          found = static_cast<int64_t>(w);
          break;
        }
      }
      if (found >= 0) {
        cursor = static_cast<size_t>(found) + 1;
        std::vector<double> row(static_cast<size_t>(in.map.beta.cols()));
        for (int64_t i = 0; i < in.map.beta.cols(); ++i) {
          row[static_cast<size_t>(i)] = in.map.beta.at(found, i);
        }
        ws.step = found;
        ws.argmax_frame = argmax_index(row);
        ws.pred = predicted_interval(row, tau);
        ws.element_of = element_of(row, ws.gt);
        ws.iou = iou(ws.pred, ws.gt);
        ws.iop = iop(ws.pred, ws.gt);
        ++report.n_matched;
      }
      sample.iou += ws.iou;
      sample.iop += ws.iop;
      sample.element_rate += ws.element_of ? 1.0 : 0.0;
      ++sample.n_segments;
      sum_iou += ws.iou;
      sum_iop += ws.iop;
      hits += ws.element_of ? 1 : 0;
      ++report.n_segments;
      report.words.push_back(std::move(ws));
    }
    const double inv = 1.0 / static_cast<double>(sample.n_segments);
    sample.iou *= inv;
    sample.iop *= inv;
    sample.element_rate *= inv;
    report.per_sample.push_back(std::move(sample));
  }
  report.mean_iou = sum_iou / static_cast<double>(report.n_segments);
  report.mean_iop = sum_iop / static_cast<double>(report.n_segments);
  report.element_rate =
      static_cast<double>(hits) / static_cast<double>(report.n_segments);
  return report;
}

std::string sync_report_json(const SyncReport& report) {
  nlohmann::ordered_json o;
  o["tau"] = report.tau;
  o["n_segments"] = report.n_segments;
  o["n_matched"] = report.n_matched;
  o["mean_iou"] = report.mean_iou;
  o["mean_iop"] = report.mean_iop;
  o["element_rate"] = report.element_rate;
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const SampleScore& s : report.per_sample) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["n_segments"] = s.n_segments;
    js["iou"] = s.iou;
    js["iop"] = s.iop;
    js["element_rate"] = s.element_rate;
    samples.push_back(std::move(js));
  }
  o["per_sample"] = std::move(samples);
  return o.dump(2);
}

std::string sync_report_csv(const SyncReport& report) {
  std::ostringstream out;
  out << "word,step,argmax_frame,pred_start,pred_end,gt_start,gt_end,iou,iop,"
         "element_of\n";
  char buf[64];
  for (const WordScore& w : report.words) {
    out << w.word << ',' << w.step << ',' << w.argmax_frame << ','
        << w.pred.start << ',' << w.pred.end << ',' << w.gt.start << ','
        << w.gt.end << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,", w.iou, w.iop);
    out << buf << (w.element_of ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace syncap::metrics
