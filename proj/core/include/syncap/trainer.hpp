#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syncap/dataset.hpp"
#include "syncap/model.hpp"

namespace syncap {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t batch_size = 16;
  int64_t epochs = 100;
  uint64_t seed = 0;
  double lambda_0 = 0.1;
  double lambda_m = 1000.0;
  double margin = 1.0;
  double clip_norm = 5.0;
  // Held-out BLEU cadence in epochs; 0 disables evaluation.
  int64_t eval_every = 0;
  // Stop once held-out BLEU@4 reaches this; 0 disables early stopping.
  double target_bleu = 0.0;
  // Best checkpoint lands here, the final epoch at checkpoint + ".final".
  // Empty skips checkpointing.
  std::string checkpoint;

  void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
TrainConfig train_config_from_json_file(const std::string& path);

struct EpochStats {
  int64_t epoch = 0;
  double loss_lang = 0.0;
  double loss_0 = 0.0;
  double loss_m = 0.0;
  double total = 0.0;
  double bleu = -1.0;  // -1 when this epoch was not evaluated
  double wall_seconds = 0.0;
  uint64_t rng_digest = 0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// JSONL, one epoch per line. This is a log, not a data artifact; it carries
// wall-clock times and is the one output exempt from byte-stability.
void write_train_log(const TrainLog& log, const std::string& path);

// Mini-batch with zero-padded poses and PAD-padded captions. Attention and
// losses always run at the true lengths, so padding never leaks into values.
struct PaddedBatch {
  std::vector<Tensor> poses;            // each t_max x c
  std::vector<int64_t> frame_lengths;   // true T_x per sample
  std::vector<std::vector<int>> tokens; // each padded to l_max with PAD
  std::vector<int64_t> token_lengths;   // true caption length incl. BOS/EOS
  Tensor frame_mask;                    // B x t_max, 1 where the frame is real
  Tensor token_mask;                    // B x l_max
  int64_t t_max = 0;
  int64_t l_max = 0;
};

PaddedBatch pad_batch(const std::vector<data::Sample>& samples,
                      const data::Vocab& vocab);

// Bias-corrected adaptive-moment updates over the model parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>>& params, double lr,
                double beta1, double beta2, double eps);

  void zero_grad();
  void step();
  int64_t steps_taken() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>>& params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double global_grad_norm(const std::vector<std::pair<std::string, Tensor>>& params);
void clip_gradients(std::vector<std::pair<std::string, Tensor>>& params,
                    double max_norm);

// Corpus BLEU@4 of greedy captions against the references.
double evaluate_bleu(const Model& model, const data::Vocab& vocab,
                     const std::vector<data::Sample>& samples);

struct TrainResult {
  TrainLog log;
  int64_t epochs_run = 0;  // absolute epoch count, including resumed epochs
  int64_t best_epoch = -1;
  double best_bleu = -1.0;
  bool reached_target = false;
};

// Deterministic teacher-forced training. Shuffling, init, and updates are
// all single-threaded and seeded, so identical inputs give bitwise-identical
// parameters. val may be empty; start_epoch offsets numbering on resume.
TrainResult train(Model& model, const data::Vocab& vocab,
                  const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set,
                  const TrainConfig& cfg, int64_t start_epoch = 0);

}  // namespace syncap
