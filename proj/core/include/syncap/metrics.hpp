#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "syncap/attention.hpp"
#include "syncap/dataset.hpp"

namespace syncap::metrics {

// Inclusive frame interval.
struct Interval {
  int64_t start = 0;
  int64_t end = 0;
};

// Corpus BLEU with one reference per candidate: geometric mean of clipped
// n-gram precisions up to max_n times the brevity penalty. A precision
// whose clipped count (or candidate n-gram total) is zero contributes
// 1e-9 instead, so short captions don't zero the score.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references, int max_n);

// LCS-based F1 (beta = 1); 0 when either side is empty.
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

// First index of the maximum (ties resolve to the smallest index).
int64_t argmax_index(std::span<const double> weights);

// True iff the argmax frame of the attention row lies inside gt.
bool element_of(std::span<const double> beta_row, Interval gt);

// Smallest contiguous interval around the argmax holding at least tau of
// the attention mass. Grown greedily toward the larger adjacent weight
// (ties toward the lower index), then trimmed from whichever end can be
// dropped without losing the argmax or falling under tau.
Interval predicted_interval(std::span<const double> beta_row, double tau);

double iou(Interval a, Interval b);
double iop(Interval pred, Interval gt);

struct WordScore {
  std::string sample_id;
  std::string word;           // the segment label being scored
  int64_t step = -1;          // decode step of the matched word; -1 on miss
  int64_t argmax_frame = -1;
  Interval pred{-1, -1};
  Interval gt{0, 0};
  double iou = 0.0;
  double iop = 0.0;
  bool element_of = false;
};

struct SampleScore {
  std::string id;
  double iou = 0.0;
  double iop = 0.0;
  double element_rate = 0.0;
  int64_t n_segments = 0;
};

struct SyncReport {
  double mean_iou = 0.0;
  double mean_iop = 0.0;
  double element_rate = 0.0;
  int64_t n_segments = 0;
  int64_t n_matched = 0;
  double tau = 0.0;
  std::vector<SampleScore> per_sample;
  std::vector<WordScore> words;
};

struct SyncInput {
  std::string id;
  // One entry per decode step, the raw token string of that step; row t of
  // the map belongs to words[t].
  std::vector<std::string> words;
  AttentionMap map;
  std::vector<data::Segment> segments;
};

// Scores every annotated segment: the first not-yet-consumed generated
// word equal to the segment label (labels come from the keyword table) is
// matched in order; its attention row yields element_of and the
// predicted-interval IoU/IoP. Segments with no matching word count as
// misses. Throws when the inputs carry no segments at all.
SyncReport evaluate_sync(const std::vector<SyncInput>& inputs,
                         const std::vector<std::string>& keywords, double tau);

std::string sync_report_json(const SyncReport& report);
// Columns: word,step,argmax_frame,pred_start,pred_end,gt_start,gt_end,iou,
// iop,element_of — one row per scored segment in input order.
std::string sync_report_csv(const SyncReport& report);

}  // namespace syncap::metrics
