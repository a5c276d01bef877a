#include "syncap/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "syncap/checkpoint.hpp"
#include "syncap/metrics.hpp"
#include "syncap/objectives.hpp"
#include "syncap/rng.hpp"

namespace syncap {

namespace {

using nlohmann::ordered_json;

// Decorrelates the shuffle stream from the init stream of the same seed.
constexpr uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

Tensor mean_of(Tape& tape, std::span<const Tensor> scalars) {
  if (scalars.size() == 1) return scalars[0];
  return mean(tape, concat_rows(tape, scalars));
}

double require_number(const ordered_json& o, const char* key, double fallback) {
  if (!o.contains(key)) return fallback;
  const auto& v = o.at(key);
  if (!v.is_number()) {
    throw std::invalid_argument(std::string("train config key '") + key +
                                "' must be a number");
  }
  return v.get<double>();
}

int64_t require_int(const ordered_json& o, const char* key, int64_t fallback) {
  if (!o.contains(key)) return fallback;
  const auto& v = o.at(key);
  if (!v.is_number_integer()) {
    throw std::invalid_argument(std::string("train config key '") + key +
                                "' must be an integer");
  }
  return v.get<int64_t>();
}

}  // namespace

void TrainConfig::validate() const {
  // lr = 0 is legal: it must leave parameters bitwise unchanged.
  if (!(lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(lambda_0 >= 0.0) || !(lambda_m >= 0.0)) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  if (!(margin >= 0.0)) throw std::invalid_argument("margin must be >= 0");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
  if (!(target_bleu >= 0.0 && target_bleu <= 1.0)) {
    throw std::invalid_argument("target_bleu must lie in [0, 1]");
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  ordered_json o;
  try {
    o = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  if (!o.is_object()) {
    throw std::invalid_argument("train config must be a JSON object");
  }
  static const std::unordered_set<std::string> known = {
      "lr",       "beta1",     "beta2",      "eps",         "batch_size",
      "epochs",   "seed",      "lambda_0",   "lambda_m",    "margin",
      "clip_norm", "eval_every", "target_bleu", "checkpoint"};
  for (const auto& item : o.items()) {
    if (!known.count(item.key())) {
      throw std::invalid_argument("unknown train config key '" + item.key() +
                                  "'");
    }
  }
  TrainConfig cfg;
  cfg.lr = require_number(o, "lr", cfg.lr);
  cfg.beta1 = require_number(o, "beta1", cfg.beta1);
  cfg.beta2 = require_number(o, "beta2", cfg.beta2);
  cfg.eps = require_number(o, "eps", cfg.eps);
  cfg.batch_size = require_int(o, "batch_size", cfg.batch_size);
  cfg.epochs = require_int(o, "epochs", cfg.epochs);
  if (o.contains("seed")) cfg.seed = o.at("seed").get<uint64_t>();
  cfg.lambda_0 = require_number(o, "lambda_0", cfg.lambda_0);
  cfg.lambda_m = require_number(o, "lambda_m", cfg.lambda_m);
  cfg.margin = require_number(o, "margin", cfg.margin);
  cfg.clip_norm = require_number(o, "clip_norm", cfg.clip_norm);
  cfg.eval_every = require_int(o, "eval_every", cfg.eval_every);
  cfg.target_bleu = require_number(o, "target_bleu", cfg.target_bleu);
  if (o.contains("checkpoint")) {
    cfg.checkpoint = o.at("checkpoint").get<std::string>();
  }
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  try {
    return train_config_from_json(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const EpochStats& s : log.epochs) {
    ordered_json o;
    o["epoch"] = s.epoch;
    o["loss_lang"] = s.loss_lang;
    o["loss_0"] = s.loss_0;
    o["loss_m"] = s.loss_m;
    o["total"] = s.total;
    if (s.bleu >= 0.0) {
      o["bleu"] = s.bleu;
    } else {
      o["bleu"] = nullptr;
    }
    o["wall_seconds"] = s.wall_seconds;
    o["rng_digest"] = s.rng_digest;
    out << o.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PaddedBatch pad_batch(const std::vector<data::Sample>& samples,
                      const data::Vocab& vocab) {
  if (samples.empty()) throw std::invalid_argument("pad_batch: empty batch");
  const int64_t b = static_cast<int64_t>(samples.size());
  const int64_t c = samples.front().poses.cols();

  PaddedBatch batch;
  for (const data::Sample& s : samples) {
    if (s.poses.cols() != c) {
      throw std::invalid_argument("pad_batch: sample " + s.id + " has " +
                                  std::to_string(s.poses.cols()) +
                                  " pose features, expected " +
                                  std::to_string(c));
    }
    batch.frame_lengths.push_back(s.poses.rows());
    batch.tokens.push_back(vocab.encode(s.caption));
    batch.token_lengths.push_back(
        static_cast<int64_t>(batch.tokens.back().size()));
    batch.t_max = std::max(batch.t_max, s.poses.rows());
    batch.l_max = std::max(batch.l_max, batch.token_lengths.back());
  }

  batch.frame_mask = Tensor::zeros(b, batch.t_max);
  batch.token_mask = Tensor::zeros(b, batch.l_max);
  for (int64_t i = 0; i < b; ++i) {
    Tensor padded = Tensor::zeros(batch.t_max, c);
    const Tensor& src = samples[static_cast<size_t>(i)].poses;
    for (int64_t t = 0; t < src.rows(); ++t) {
      for (int64_t j = 0; j < c; ++j) padded.at_mut(t, j) = src.at(t, j);
    }
    batch.poses.push_back(std::move(padded));
    for (int64_t t = 0; t < batch.frame_lengths[static_cast<size_t>(i)]; ++t) {
      batch.frame_mask.at_mut(i, t) = 1.0;
    }
    auto& toks = batch.tokens[static_cast<size_t>(i)];
    for (int64_t t = 0; t < batch.token_lengths[static_cast<size_t>(i)]; ++t) {
      batch.token_mask.at_mut(i, t) = 1.0;
    }
    toks.resize(static_cast<size_t>(batch.l_max), data::Vocab::kPad);
  }
  return batch;
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>>& params,
                             double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(static_cast<size_t>(t.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(t.size()), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void AdamOptimizer::step() {
  ++t_;
  const double corr1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    auto values = params_[p].second.values_mut();
    const auto grads = params_[p].second.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      values[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

double global_grad_norm(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_gradients(std::vector<std::pair<std::string, Tensor>>& params,
                    double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (auto& [name, t] : params) {
    for (double& g : t.grad_mut()) g *= factor;
  }
}

double evaluate_bleu(const Model& model, const data::Vocab& vocab,
                     const std::vector<data::Sample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("evaluate_bleu: empty sample list");
  }
  std::vector<std::vector<std::string>> candidates, references;
  for (const data::Sample& s : samples) {
    Generated gen = model.generate(s.poses, s.poses.rows());
    candidates.push_back(data::tokenize(vocab.decode(gen.tokens)));
    references.push_back(data::tokenize(s.caption));
  }
  return metrics::bleu(candidates, references, 4);
}

TrainResult train(Model& model, const data::Vocab& vocab,
                  const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& val_set,
                  const TrainConfig& cfg, int64_t start_epoch) {
  cfg.validate();
  if (train_set.empty()) {
    throw std::invalid_argument("train: empty training set");
  }
  if (vocab.size() != model.config().vocab_size) {
    throw std::invalid_argument(
        "train: vocab has " + std::to_string(vocab.size()) +
        " words, model expects " + std::to_string(model.config().vocab_size));
  }
  if (start_epoch < 0) throw std::invalid_argument("start_epoch must be >= 0");

  auto& params = model.parameters();
  AdamOptimizer opt(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  Rng shuffle_rng = Rng::for_stream(cfg.seed ^ kShuffleStream, 0);

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  result.epochs_run = start_epoch;
  const int64_t n = static_cast<int64_t>(train_set.size());

  for (int64_t rel = 0; rel < cfg.epochs; ++rel) {
    const int64_t epoch = start_epoch + rel;
    const auto wall_start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double sum_lang = 0.0, sum_l0 = 0.0, sum_lm = 0.0;
    int64_t batch_index = 0;
    for (int64_t first = 0; first < n; first += cfg.batch_size, ++batch_index) {
      const int64_t count = std::min(cfg.batch_size, n - first);
      std::vector<data::Sample> members;
      members.reserve(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i) {
        members.push_back(train_set[order[static_cast<size_t>(first + i)]]);
      }
      PaddedBatch batch = pad_batch(members, vocab);

      Tape tape;
      std::vector<Tensor> langs, inits, monos;
      for (int64_t i = 0; i < count; ++i) {
        const auto& tokens = batch.tokens[static_cast<size_t>(i)];
        const int64_t len = batch.token_lengths[static_cast<size_t>(i)];
        const int64_t t_x = batch.frame_lengths[static_cast<size_t>(i)];
        SampleForward fwd = model.forward_teacher_forced(
            tape, batch.poses[static_cast<size_t>(i)], t_x,
            std::span<const int>(tokens.data(), static_cast<size_t>(len)));
        langs.push_back(objectives::loss_lang(
            tape, fwd.logits,
            std::span<const int>(tokens.data() + 1,
                                 static_cast<size_t>(len - 1))));
        inits.push_back(objectives::loss_init(tape, fwd.centers.front(), t_x));
        monos.push_back(
            objectives::loss_monotonic(tape, fwd.centers, cfg.margin, t_x));
      }
      Tensor lang = mean_of(tape, langs);
      Tensor l0 = mean_of(tape, inits);
      Tensor lm = mean_of(tape, monos);
      Tensor total =
          objectives::combine(tape, lang, l0, lm, cfg.lambda_0, cfg.lambda_m);
      if (!std::isfinite(total.item())) {
        throw std::runtime_error("non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_index));
      }
      opt.zero_grad();
      tape.backward(total);
      clip_gradients(params, cfg.clip_norm);
      opt.step();

      const double w = static_cast<double>(count);
      sum_lang += lang.item() * w;
      sum_l0 += l0.item() * w;
      sum_lm += lm.item() * w;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_lang = sum_lang / static_cast<double>(n);
    stats.loss_0 = sum_l0 / static_cast<double>(n);
    stats.loss_m = sum_lm / static_cast<double>(n);
    stats.total = stats.loss_lang + cfg.lambda_0 * stats.loss_0 +
                  cfg.lambda_m * stats.loss_m;
    stats.rng_digest = shuffle_rng.state_digest();

    const bool last_epoch = rel == cfg.epochs - 1;
    const bool eval_now =
        !val_set.empty() && cfg.eval_every > 0 &&
        ((epoch + 1) % cfg.eval_every == 0 || last_epoch);
    if (eval_now) {
      stats.bleu = evaluate_bleu(model, vocab, val_set);
      if (stats.bleu > result.best_bleu) {
        result.best_bleu = stats.bleu;
        result.best_epoch = epoch;
        if (!cfg.checkpoint.empty()) {
          save_checkpoint(cfg.checkpoint, model, vocab, epoch + 1);
        }
      }
    }

    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      wall_start)
            .count();

    char line[256];
    std::snprintf(line, sizeof line,
                  "epoch %lld loss_lang %.6f loss_0 %.6f loss_m %.6f total %.6f",
                  static_cast<long long>(epoch), stats.loss_lang, stats.loss_0,
                  stats.loss_m, stats.total);
    std::cout << line;
    if (stats.bleu >= 0.0) {
      std::snprintf(line, sizeof line, " bleu %.4f", stats.bleu);
      std::cout << line;
    }
    std::cout << '\n' << std::flush;

    result.log.epochs.push_back(stats);
    result.epochs_run = epoch + 1;

    if (cfg.target_bleu > 0.0 && stats.bleu >= cfg.target_bleu) {
      result.reached_target = true;
      break;
    }
  }

  if (!cfg.checkpoint.empty()) {
    save_checkpoint(cfg.checkpoint + ".final", model, vocab,
                    result.epochs_run);
    if (result.best_epoch < 0) {
      // Never evaluated; the final state stands in for "best".
      save_checkpoint(cfg.checkpoint, model, vocab, result.epochs_run);
    }
  }
  return result;
}

}  // namespace syncap
