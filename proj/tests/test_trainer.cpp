#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "syncap/checkpoint.hpp"
#include "syncap/dataset.hpp"
#include "syncap/model.hpp"
#include "syncap/objectives.hpp"
#include "syncap/rng.hpp"
#include "syncap/trainer.hpp"

using namespace syncap;

namespace {

data::Sample make_sample(Rng& rng, const std::string& id, int64_t t, int64_t c,
                         const std::string& caption) {
  data::Sample s;
  s.id = id;
  std::vector<double> v(static_cast<size_t>(t * c));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  s.poses = Tensor::from_vector(std::move(v), t, c);
  s.caption = caption;
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelConfig small_config(int64_t vocab_size, int64_t c) {
  ModelConfig cfg;
  cfg.d_m = 8;
  cfg.n_h = 2;
  cfg.r = 3;
  cfg.d_cross = 3;
  cfg.n_layers = 1;
  cfg.max_t_y = 24;
  cfg.max_t_x = 100;
  cfg.vocab_size = vocab_size;
  cfg.c = c;
  return cfg;
}

}  // namespace

TEST_CASE("pad_batch keeps a single sample intact") {
  Rng rng(80);
  const data::Sample s = make_sample(rng, "one", 7, 3, "walk fast");
  const data::Vocab vocab = data::build_vocab({s});
  const PaddedBatch batch = pad_batch({s}, vocab);

  CHECK(batch.t_max == 7);
  CHECK(batch.l_max == 4);  // BOS walk fast EOS
  REQUIRE(batch.poses.size() == 1);
  CHECK(batch.frame_lengths == std::vector<int64_t>{7});
  CHECK(batch.token_lengths == std::vector<int64_t>{4});
  for (int64_t i = 0; i < 7; ++i) {
    CHECK(batch.frame_mask.at(0, i) == 1.0);
    for (int64_t j = 0; j < 3; ++j) {
      CHECK(batch.poses[0].at(i, j) == s.poses.at(i, j));
    }
  }
  CHECK(batch.tokens[0] == vocab.encode("walk fast"));
  for (int64_t j = 0; j < 4; ++j) CHECK(batch.token_mask.at(0, j) == 1.0);
}

TEST_CASE("pad_batch masks the tail of the shorter sample") {
  Rng rng(81);
  const data::Sample a = make_sample(rng, "a", 10, 3, "walk fast");
  const data::Sample b = make_sample(rng, "b", 20, 3, "jump");
  const data::Vocab vocab = data::build_vocab({a, b});
  const PaddedBatch batch = pad_batch({a, b}, vocab);

  CHECK(batch.t_max == 20);
  CHECK(batch.l_max == 4);
  CHECK(batch.frame_lengths == std::vector<int64_t>({10, 20}));

  // Sample a occupies frames 0..9; frames 10..19 are mask 0 and zero poses.
  for (int64_t i = 0; i < 10; ++i) CHECK(batch.frame_mask.at(0, i) == 1.0);
  for (int64_t i = 10; i < 20; ++i) {
    CHECK(batch.frame_mask.at(0, i) == 0.0);
    for (int64_t j = 0; j < 3; ++j) CHECK(batch.poses[0].at(i, j) == 0.0);
  }
  for (int64_t i = 0; i < 20; ++i) CHECK(batch.frame_mask.at(1, i) == 1.0);

  // Caption b pads BOS jump EOS with one PAD.
  REQUIRE(batch.tokens[1].size() == 4);
  CHECK(batch.tokens[1][0] == data::Vocab::kBos);
  CHECK(batch.tokens[1][2] == data::Vocab::kEos);
  CHECK(batch.tokens[1][3] == data::Vocab::kPad);
  CHECK(batch.token_mask.at(1, 3) == 0.0);
  CHECK(batch.token_lengths[1] == 3);

  CHECK_THROWS_AS(pad_batch({}, vocab), std::invalid_argument);
  const data::Sample odd = make_sample(rng, "odd", 5, 4, "walk");
  CHECK_THROWS_AS(pad_batch({a, odd}, vocab), std::invalid_argument);
}

TEST_CASE("padded frames never change a forward pass at the true length") {
  Rng rng(82);
  const data::Sample s = make_sample(rng, "pad", 9, 3, "walk fast");
  const data::Vocab vocab = data::build_vocab({s});
  const PaddedBatch batch = pad_batch({s, make_sample(rng, "long", 15, 3, "jump")}, vocab);

  ModelConfig cfg = small_config(vocab.size(), 3);
  Model model(cfg, 17);
  const std::vector<int> tokens = vocab.encode(s.caption);

  Tape ta;
  SampleForward from_batch = model.forward_teacher_forced(
      ta, batch.poses[0], batch.frame_lengths[0], tokens);
  Tape tb;
  SampleForward from_raw =
      model.forward_teacher_forced(tb, s.poses, s.poses.rows(), tokens);

  REQUIRE(from_batch.logits.rows() == from_raw.logits.rows());
  for (int64_t i = 0; i < from_raw.logits.rows(); ++i) {
    for (int64_t j = 0; j < from_raw.logits.cols(); ++j) {
      CHECK(from_batch.logits.at(i, j) == from_raw.logits.at(i, j));
    }
  }
  for (size_t t = 0; t < from_raw.centers.size(); ++t) {
    CHECK(from_batch.centers[t].item() == from_raw.centers[t].item());
  }
}

TEST_CASE("adam matches a scalar reference implementation") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("w", Tensor::scalar(1.0, true));
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  AdamOptimizer opt(params, lr, b1, b2, eps);

  const std::vector<double> grads = {0.5, -0.3, 1.2, 0.05, -2.0};
  double w = 1.0, m = 0.0, v = 0.0;
  for (size_t t = 0; t < grads.size(); ++t) {
    opt.zero_grad();
    params[0].second.grad_mut()[0] = grads[t];
    opt.step();

    const double g = grads[t];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double tt = static_cast<double>(t + 1);
    const double mh = m / (1.0 - std::pow(b1, tt));
    const double vh = v / (1.0 - std::pow(b2, tt));
    w -= lr * mh / (std::sqrt(vh) + eps);

    CHECK(params[0].second.values()[0] == doctest::Approx(w).epsilon(1e-12));
  }
  CHECK(opt.steps_taken() == 5);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  ModelConfig cfg = small_config(6, 3);
  Model model(cfg, 19);
  std::vector<std::vector<double>> before;
  for (const auto& [name, t] : model.parameters()) {
    before.emplace_back(t.values().begin(), t.values().end());
  }

  AdamOptimizer opt(model.parameters(), 0.0, 0.9, 0.999, 1e-8);
  for (auto& [name, t] : model.parameters()) {
    for (double& g : t.grad_mut()) g = 0.7;
  }
  opt.step();
  opt.step();

  size_t idx = 0;
  for (const auto& [name, t] : model.parameters()) {
    const auto now = t.values();
    REQUIRE(now.size() == before[idx].size());
    for (size_t j = 0; j < now.size(); ++j) CHECK(now[j] == before[idx][j]);
    ++idx;
  }
}

TEST_CASE("gradient clipping rescales to the norm cap") {
  std::vector<std::pair<std::string, Tensor>> params;
  params.emplace_back("g", Tensor::from_vector({0.0, 0.0}, 1, 2, true));
  params[0].second.grad_mut()[0] = 6.0;
  params[0].second.grad_mut()[1] = 8.0;
  CHECK(global_grad_norm(params) == doctest::Approx(10.0).epsilon(1e-12));

  clip_gradients(params, 5.0);
  CHECK(params[0].second.grad()[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(params[0].second.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-9));

  // Already under the cap: untouched bitwise.
  const double g0 = params[0].second.grad()[0];
  clip_gradients(params, 5.0);
  CHECK(params[0].second.grad()[0] == g0);
}

TEST_CASE("train config validation and JSON parsing") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;  // legal: must act as a null update
  CHECK_NOTHROW(cfg.validate());

  auto broken = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.lr = -1e-4; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.beta1 = 1.0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.beta2 = -0.1; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.eps = 0.0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.batch_size = 0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.epochs = -1; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.lambda_0 = -0.1; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.margin = -1.0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.clip_norm = 0.0; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.eval_every = -2; }).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(broken([](TrainConfig& c) { c.target_bleu = 1.5; }).validate(),
                  std::invalid_argument);

  const TrainConfig parsed = train_config_from_json(
      R"({"lr": 0.002, "batch_size": 4, "epochs": 12, "lambda_m": 500,
          "target_bleu": 0.9, "checkpoint": "m.ckpt"})");
  CHECK(parsed.lr == 0.002);
  CHECK(parsed.batch_size == 4);
  CHECK(parsed.epochs == 12);
  CHECK(parsed.lambda_m == 500.0);
  CHECK(parsed.target_bleu == 0.9);
  CHECK(parsed.checkpoint == "m.ckpt");
  CHECK(parsed.beta1 == 0.9);  // untouched default

  CHECK_THROWS_AS(train_config_from_json(R"({"lr": 0.1, "typo": 3})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json(R"({"lr": "fast"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json("[1, 2]"), std::invalid_argument);
}

TEST_CASE("train log serializes one epoch per line with null for skipped bleu") {
  TrainLog log;
  EpochStats a;
  a.epoch = 0;
  a.loss_lang = 2.5;
  a.total = 3.25;
  a.bleu = -1.0;
  a.rng_digest = 1234567890123456789ULL;
  EpochStats b;
  b.epoch = 1;
  b.bleu = 0.5;
  b.wall_seconds = 0.25;
  log.epochs = {a, b};

  const std::string path = "trainer_log_test.jsonl";
  write_train_log(log, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  const nlohmann::json first = nlohmann::json::parse(line);
  CHECK(first.at("epoch").get<int64_t>() == 0);
  CHECK(first.at("loss_lang").get<double>() == 2.5);
  CHECK(first.at("bleu").is_null());
  CHECK(first.at("rng_digest").get<uint64_t>() == 1234567890123456789ULL);
  REQUIRE(std::getline(in, line));
  const nlohmann::json second = nlohmann::json::parse(line);
  CHECK(second.at("bleu").get<double>() == 0.5);
  CHECK(second.at("wall_seconds").get<double>() == 0.25);
  CHECK(!std::getline(in, line));
  std::remove(path.c_str());
}

TEST_CASE("training is deterministic and reduces the loss") {
  const std::vector<data::Sample> corpus = data::generate_corpus(6, 5, 1, 1);
  const data::Vocab vocab = data::build_vocab(corpus);
  ModelConfig mcfg = small_config(vocab.size(), 24);

  TrainConfig tcfg;
  tcfg.lr = 1e-3;
  tcfg.batch_size = 4;
  tcfg.epochs = 8;
  tcfg.seed = 9;
  tcfg.eval_every = 4;
  tcfg.checkpoint = "trainer_det_a.ckpt";

  Model model_a(mcfg, tcfg.seed);
  const TrainResult res_a = train(model_a, vocab, corpus, corpus, tcfg);

  REQUIRE(res_a.log.epochs.size() == 8);
  CHECK(res_a.log.epochs.front().epoch == 0);
  CHECK(res_a.log.epochs.back().epoch == 7);
  CHECK(res_a.epochs_run == 8);
  CHECK(res_a.log.epochs.front().bleu == -1.0);
  CHECK(res_a.log.epochs[3].bleu >= 0.0);
  CHECK(res_a.log.epochs.back().bleu >= 0.0);
  CHECK(res_a.best_epoch >= 0);
  CHECK(res_a.best_bleu >= 0.0);
  CHECK(res_a.log.epochs.back().total < res_a.log.epochs.front().total);
  for (const EpochStats& e : res_a.log.epochs) {
    CHECK(std::isfinite(e.total));
    CHECK(e.loss_m >= 0.0);
    CHECK(e.loss_0 >= 0.0);
  }

  TrainConfig tcfg_b = tcfg;
  tcfg_b.checkpoint = "trainer_det_b.ckpt";
  Model model_b(mcfg, tcfg_b.seed);
  const TrainResult res_b = train(model_b, vocab, corpus, corpus, tcfg_b);

  const auto &pa = model_a.parameters(), &pb = model_b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    const auto va = pa[i].second.values(), vb = pb[i].second.values();
    for (size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
  CHECK(read_file("trainer_det_a.ckpt") == read_file("trainer_det_b.ckpt"));
  CHECK(read_file("trainer_det_a.ckpt.final") ==
        read_file("trainer_det_b.ckpt.final"));
  for (size_t i = 0; i < res_a.log.epochs.size(); ++i) {
    CHECK(res_a.log.epochs[i].total == res_b.log.epochs[i].total);
    CHECK(res_a.log.epochs[i].rng_digest == res_b.log.epochs[i].rng_digest);
  }

  // Resuming numbers epochs after the ones already run.
  TrainConfig more = tcfg_b;
  more.epochs = 2;
  more.eval_every = 0;
  more.checkpoint = "";
  const TrainResult res_more = train(model_b, vocab, corpus, corpus, more, 8);
  REQUIRE(res_more.log.epochs.size() == 2);
  CHECK(res_more.log.epochs[0].epoch == 8);
  CHECK(res_more.log.epochs[1].epoch == 9);
  CHECK(res_more.epochs_run == 10);

  std::remove("trainer_det_a.ckpt");
  std::remove("trainer_det_a.ckpt.final");
  std::remove("trainer_det_b.ckpt");
  std::remove("trainer_det_b.ckpt.final");
}

TEST_CASE("evaluate_bleu is deterministic and bounded") {
  const std::vector<data::Sample> corpus = data::generate_corpus(4, 6, 1, 1);
  const data::Vocab vocab = data::build_vocab(corpus);
  Model model(small_config(vocab.size(), 24), 23);
  const double b1 = evaluate_bleu(model, vocab, corpus);
  const double b2 = evaluate_bleu(model, vocab, corpus);
  CHECK(b1 == b2);
  CHECK(b1 >= 0.0);
  CHECK(b1 <= 1.0);
}

TEST_CASE("checkpoints round-trip the model, vocab, and epoch") {
  const std::vector<data::Sample> corpus = data::generate_corpus(3, 8, 1, 1);
  const data::Vocab vocab = data::build_vocab(corpus);
  ModelConfig cfg = small_config(vocab.size(), 24);
  cfg.d_cross = std::nullopt;  // exercise the unbounded radius encoding
  Model model(cfg, 29);

  const std::string path = "trainer_rt.ckpt";
  save_checkpoint(path, model, vocab, 4);
  const LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.epoch == 4);
  CHECK(loaded.config.d_m == cfg.d_m);
  CHECK(loaded.config.n_h == cfg.n_h);
  CHECK(loaded.config.r == cfg.r);
  CHECK(loaded.config.d_cross == std::nullopt);
  CHECK(loaded.config.n_layers == cfg.n_layers);
  CHECK(loaded.config.max_t_y == cfg.max_t_y);
  CHECK(loaded.config.max_t_x == cfg.max_t_x);
  CHECK(loaded.config.vocab_size == cfg.vocab_size);
  CHECK(loaded.config.c == cfg.c);
  CHECK(loaded.vocab.words() == vocab.words());

  const auto &orig = model.parameters(), &back = loaded.model.parameters();
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    const auto vo = orig[i].second.values(), vl = back[i].second.values();
    REQUIRE(vo.size() == vl.size());
    for (size_t j = 0; j < vo.size(); ++j) CHECK(vo[j] == vl[j]);
  }

  // The restored model decodes exactly as the original.
  const Generated g1 = model.generate(corpus[0].poses, corpus[0].poses.rows());
  const Generated g2 =
      loaded.model.generate(corpus[0].poses, corpus[0].poses.rows());
  CHECK(g1.tokens == g2.tokens);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::vector<data::Sample> corpus = data::generate_corpus(2, 9, 1, 1);
  const data::Vocab vocab = data::build_vocab(corpus);
  Model model(small_config(vocab.size(), 24), 31);
  const std::string path = "trainer_bad.ckpt";
  save_checkpoint(path, model, vocab, 0);
  const std::string bytes = read_file(path);

  write_file(path, bytes.substr(0, bytes.size() - 16));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  write_file(path, "definitely not a header\n" + bytes.substr(bytes.find('\n') + 1));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  const size_t nl = bytes.find('\n');
  nlohmann::json header = nlohmann::json::parse(bytes.substr(0, nl));
  header["format_version"] = 2;
  write_file(path, header.dump() + bytes.substr(nl));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint("no_such_file.ckpt"), std::runtime_error);
  std::remove(path.c_str());
}
