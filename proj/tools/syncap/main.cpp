#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "syncap/checkpoint.hpp"
#include "syncap/dataset.hpp"
#include "syncap/heatmap.hpp"
#include "syncap/metrics.hpp"
#include "syncap/model.hpp"
#include "syncap/trainer.hpp"

namespace {

using namespace syncap;
using nlohmann::ordered_json;

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug; set via SYNCAP_LOG

void init_log_level() {
  const char* env = std::getenv("SYNCAP_LOG");
  if (!env) return;
  const std::string value = env;
  if (value == "quiet") {
    g_log_level = 0;
  } else if (value == "info") {
    g_log_level = 1;
  } else if (value == "debug") {
    g_log_level = 2;
  } else {
    std::cerr << "warning: unknown SYNCAP_LOG value '" << value
              << "' (quiet|info|debug)\n";
  }
}

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[syncap] " << msg << '\n';
}

void log_debug(const std::string& msg) {
  if (g_log_level >= 2) std::cerr << "[syncap] " << msg << '\n';
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

ordered_json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return ordered_json::parse(in);
  } catch (const ordered_json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

Radius radius_from_flag(int64_t v) {
  if (v == -1) return std::nullopt;
  return v;
}

// ---- gen-data -----------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int64_t n = 0;
  uint64_t seed = 0;
  int min_prims = 1;
  int max_prims = 4;
};

int run_gen_data(const GenDataArgs& a) {
  auto corpus = data::generate_corpus(a.n, a.seed, a.min_prims, a.max_prims);
  data::save_jsonl(corpus, a.out);
  log_info("wrote " + std::to_string(corpus.size()) + " samples to " + a.out);
  return 0;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  std::string data, val_data, model_config, train_config, ckpt_out, log_out,
      resume;
  bool eval_on_train = false;
  std::optional<int64_t> epochs, batch_size, eval_every;
  std::optional<int64_t> d_m, n_h, n_layers, r, d_cross;
  std::optional<double> lr, lambda0, lambdam, margin, target_bleu, clip_norm;
  std::optional<uint64_t> seed;
};

void warn_short_sequences(const std::vector<data::Sample>& samples,
                          const ModelConfig& cfg) {
  if (!cfg.r || !cfg.d_cross) return;
  const int64_t need = 2 * (*cfg.r + *cfg.d_cross) + 1;
  int64_t shorts = 0;
  for (const data::Sample& s : samples) {
    if (s.poses.rows() < need) ++shorts;
  }
  if (shorts > 0) {
    std::cerr << "warning: " << shorts << " sequence(s) shorter than 2(D+r)+1 = "
              << need << " frames; their cross windows can span the whole "
                         "sequence\n";
  }
}

int run_train(const TrainArgs& a) {
  auto train_set = data::load_jsonl(a.data);
  if (train_set.empty()) {
    throw std::invalid_argument(a.data + ": training set is empty");
  }
  std::vector<data::Sample> val_set;
  if (!a.val_data.empty()) val_set = data::load_jsonl(a.val_data);

  TrainConfig tcfg;
  if (!a.train_config.empty()) {
    tcfg = train_config_from_json_file(a.train_config);
  }
  if (a.epochs) tcfg.epochs = *a.epochs;
  if (a.batch_size) tcfg.batch_size = *a.batch_size;
  if (a.eval_every) tcfg.eval_every = *a.eval_every;
  if (a.lr) tcfg.lr = *a.lr;
  if (a.lambda0) tcfg.lambda_0 = *a.lambda0;
  if (a.lambdam) tcfg.lambda_m = *a.lambdam;
  if (a.margin) tcfg.margin = *a.margin;
  if (a.target_bleu) tcfg.target_bleu = *a.target_bleu;
  if (a.clip_norm) tcfg.clip_norm = *a.clip_norm;
  if (a.seed) tcfg.seed = *a.seed;
  if (!a.ckpt_out.empty()) tcfg.checkpoint = a.ckpt_out;
  tcfg.validate();

  data::Vocab vocab;
  ModelConfig mcfg;
  std::optional<Model> model;
  int64_t start_epoch = 0;

  if (!a.resume.empty()) {
    if (!a.model_config.empty()) {
      log_info("--resume restores the checkpoint config; --model-config "
               "ignored");
    }
    LoadedCheckpoint loaded = load_checkpoint(a.resume);
    mcfg = loaded.config;
    vocab = std::move(loaded.vocab);
    model.emplace(std::move(loaded.model));
    start_epoch = loaded.epoch;
    log_info("resumed " + a.resume + " at epoch " +
             std::to_string(start_epoch));
    for (const data::Sample& s : train_set) {
      if (s.poses.rows() > mcfg.max_t_x) {
        throw std::invalid_argument(
            "sample " + s.id + " has " + std::to_string(s.poses.rows()) +
            " frames, checkpoint supports at most " +
            std::to_string(mcfg.max_t_x));
      }
    }
  } else {
    if (!a.model_config.empty()) {
      mcfg = model_config_from_json_file(a.model_config);
    }
    if (a.d_m) mcfg.d_m = *a.d_m;
    if (a.n_h) mcfg.n_h = *a.n_h;
    if (a.n_layers) mcfg.n_layers = *a.n_layers;
    if (a.r) mcfg.r = radius_from_flag(*a.r);
    if (a.d_cross) mcfg.d_cross = radius_from_flag(*a.d_cross);

    vocab = data::build_vocab(train_set);
    mcfg.vocab_size = vocab.size();
    mcfg.c = train_set.front().poses.cols();
    int64_t max_tx = 1, max_ty = 2;
    for (const auto* split : {&train_set, &val_set}) {
      for (const data::Sample& s : *split) {
        max_tx = std::max(max_tx, s.poses.rows());
        max_ty = std::max(
            max_ty, static_cast<int64_t>(vocab.encode(s.caption).size()));
      }
    }
    mcfg.max_t_x = std::max(mcfg.max_t_x, max_tx);
    mcfg.max_t_y = std::max(mcfg.max_t_y, max_ty);
    mcfg.validate();
    model.emplace(mcfg, tcfg.seed);
  }

  warn_short_sequences(train_set, mcfg);

  const std::vector<data::Sample>* val = &val_set;
  if (val_set.empty() && (a.eval_on_train || tcfg.eval_every > 0)) {
    if (!a.eval_on_train) {
      log_info("no validation data; evaluating BLEU on the training split");
    }
    val = &train_set;
  }

  TrainResult result = train(*model, vocab, train_set, *val, tcfg, start_epoch);
  if (!a.log_out.empty()) write_train_log(result.log, a.log_out);
  if (result.reached_target) {
    log_info("reached target BLEU " + std::to_string(result.best_bleu) +
             " at epoch " + std::to_string(result.best_epoch));
  }
  return 0;
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, metrics_list = "bleu,rouge,sync", out, csv;
  double tau = 0.75;
};

std::unordered_set<std::string> parse_metric_list(const std::string& list) {
  static const std::unordered_set<std::string> known = {"bleu", "rouge",
                                                        "sync"};
  std::unordered_set<std::string> requested;
  std::string cur;
  for (size_t i = 0; i <= list.size(); ++i) {
    if (i == list.size() || list[i] == ',') {
      if (!cur.empty()) {
        if (!known.count(cur)) {
          throw std::invalid_argument("unknown metric '" + cur +
                                      "' (bleu|rouge|sync)");
        }
        requested.insert(cur);
        cur.clear();
      }
    } else {
      cur += list[i];
    }
  }
  if (requested.empty()) throw std::invalid_argument("no metrics requested");
  return requested;
}

void check_fits(const data::Sample& s, const ModelConfig& cfg) {
  if (s.poses.rows() > cfg.max_t_x) {
    throw std::invalid_argument("sample " + s.id + " has " +
                                std::to_string(s.poses.rows()) +
                                " frames, checkpoint supports at most " +
                                std::to_string(cfg.max_t_x));
  }
}

int run_eval(const EvalArgs& a) {
  const auto requested = parse_metric_list(a.metrics_list);
  if (!a.csv.empty() && !requested.count("sync")) {
    throw std::invalid_argument("--csv requires the sync metric");
  }
  LoadedCheckpoint loaded = load_checkpoint(a.ckpt);
  auto samples = data::load_jsonl(a.data);
  if (samples.empty()) {
    throw std::invalid_argument(a.data + ": no samples to evaluate");
  }

  std::vector<std::vector<std::string>> cands, refs;
  std::vector<metrics::SyncInput> sync_inputs;
  for (const data::Sample& s : samples) {
    check_fits(s, loaded.config);
    Generated gen = loaded.model.generate(s.poses, s.poses.rows());
    cands.push_back(data::tokenize(loaded.vocab.decode(gen.tokens)));
    refs.push_back(data::tokenize(s.caption));
    metrics::SyncInput in;
    in.id = s.id;
    for (int tok : gen.tokens) in.words.push_back(loaded.vocab.word_of(tok));
    in.map = std::move(gen.map);
    in.segments = s.segments;
    sync_inputs.push_back(std::move(in));
    log_debug(s.id + ": " + std::to_string(cands.back().size()) +
              " generated words");
  }

  ordered_json report;
  report["n_samples"] = samples.size();
  if (requested.count("bleu")) {
    for (int n = 1; n <= 4; ++n) {
      report["bleu@" + std::to_string(n)] = metrics::bleu(cands, refs, n);
    }
  }
  if (requested.count("rouge")) {
    double sum = 0.0;
    for (size_t i = 0; i < cands.size(); ++i) {
      sum += metrics::rouge_l(cands[i], refs[i]);
    }
    report["rouge_l"] = sum / static_cast<double>(cands.size());
  }
  if (requested.count("sync")) {
    metrics::SyncReport sync =
        metrics::evaluate_sync(sync_inputs, data::primitive_labels(), a.tau);
    report["sync"] = ordered_json::parse(metrics::sync_report_json(sync));
    if (!a.csv.empty()) {
      write_text_file(a.csv, metrics::sync_report_csv(sync));
      log_info("wrote per-word sync table to " + a.csv);
    }
  }

  const std::string text = report.dump(2);
  std::cout << text << '\n';
  if (!a.out.empty()) write_text_file(a.out, text + "\n");
  return 0;
}

// ---- caption ------------------------------------------------------------

struct CaptionArgs {
  std::string ckpt, input, emit_attention;
};

int run_caption(const CaptionArgs& a) {
  LoadedCheckpoint loaded = load_checkpoint(a.ckpt);
  auto samples = data::load_jsonl(a.input);
  if (samples.empty()) {
    throw std::invalid_argument(a.input + ": no samples to caption");
  }
  if (!a.emit_attention.empty()) {
    std::filesystem::create_directories(a.emit_attention);
  }
  for (const data::Sample& s : samples) {
    check_fits(s, loaded.config);
    Generated gen = loaded.model.generate(s.poses, s.poses.rows());
    std::cout << s.id << '\t' << loaded.vocab.decode(gen.tokens) << '\n';
    if (a.emit_attention.empty()) continue;

    viz::AttentionGrid grid;
    for (int tok : gen.tokens) grid.tokens.push_back(loaded.vocab.word_of(tok));
    grid.weights = gen.map.beta;
    const auto base = std::filesystem::path(a.emit_attention) / s.id;
    viz::write_attention_csv(grid, base.string() + ".attention.csv");

    std::string centers = "token,center,window_lo,window_hi\n";
    char buf[64];
    for (size_t t = 0; t < grid.tokens.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", gen.map.centers[t]);
      centers += grid.tokens[t];
      centers += ',';
      centers += buf;
      centers += ',' + std::to_string(gen.map.windows[t][0]) + ',' +
                 std::to_string(gen.map.windows[t][1]) + '\n';
    }
    write_text_file(base.string() + ".centers.csv", centers);
  }
  return 0;
}

// ---- viz ----------------------------------------------------------------

struct VizArgs {
  std::string attention, svg, segments, aggregate;
  int64_t tick_stride = 10;
};

std::array<int64_t, 2> parse_span(const ordered_json& v, const char* key) {
  if (!v.contains(key) || !v.at(key).is_array() || v.at(key).size() != 2) {
    throw std::invalid_argument(std::string("each entry needs a 2-element '") +
                                key + "' array");
  }
  return {v.at(key).at(0).get<int64_t>(), v.at(key).at(1).get<int64_t>()};
}

int run_viz(const VizArgs& a) {
  viz::AttentionGrid grid = viz::read_attention_csv(a.attention);

  if (!a.aggregate.empty()) {
    const ordered_json spec = parse_json_file(a.aggregate);
    if (!spec.is_array()) {
      throw std::invalid_argument(a.aggregate + ": expected a JSON array");
    }
    std::vector<viz::AggregateSpan> spans;
    for (const auto& entry : spec) {
      viz::AggregateSpan span;
      span.label = entry.value("label", std::string());
      span.word_span = parse_span(entry, "word_span");
      spans.push_back(std::move(span));
    }
    grid = viz::aggregate_rows(grid, spans);
  }

  std::vector<viz::SegmentBand> bands;
  if (!a.segments.empty()) {
    const ordered_json spec = parse_json_file(a.segments);
    if (!spec.is_array()) {
      throw std::invalid_argument(a.segments + ": expected a JSON array");
    }
    for (const auto& entry : spec) {
      viz::SegmentBand band;
      band.label = entry.value("label", std::string());
      band.frame_span = parse_span(entry, "frame_span");
      bands.push_back(std::move(band));
    }
  }

  viz::HeatmapOptions opts;
  opts.tick_stride = a.tick_stride;
  write_text_file(a.svg, viz::render_heatmap_svg(grid, opts, bands));
  log_info("wrote " + a.svg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_log_level();
  CLI::App app{"Synchronous motion captioning: corpus generation, training, "
               "evaluation, and attention visualization"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "Generate a synthetic corpus as JSONL");
  gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();
  gen_cmd->add_option("--n", gen.n, "Number of samples")->required();
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
  gen_cmd->add_option("--min-prims", gen.min_prims,
                      "Fewest motion primitives per sample");
  gen_cmd->add_option("--max-prims", gen.max_prims,
                      "Most motion primitives per sample");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a captioner");
  train_cmd->add_option("--data", tr.data, "Training JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--val-data", tr.val_data, "Held-out JSONL for BLEU")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--model-config", tr.model_config, "Model JSON")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--train-config", tr.train_config, "Trainer JSON")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--ckpt-out", tr.ckpt_out,
                        "Best checkpoint path (final goes to PATH.final)");
  train_cmd->add_option("--log-out", tr.log_out, "Training log JSONL");
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")
      ->check(CLI::ExistingFile);
  train_cmd->add_flag("--eval-on-train", tr.eval_on_train,
                      "Score BLEU on the training split");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs to run");
  train_cmd->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  train_cmd->add_option("--eval-every", tr.eval_every,
                        "BLEU cadence in epochs (0 = never)");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--lambda0", tr.lambda0, "Initialization loss weight");
  train_cmd->add_option("--lambdam", tr.lambdam, "Monotonicity loss weight");
  train_cmd->add_option("--margin", tr.margin, "Monotonicity margin in frames");
  train_cmd->add_option("--target-bleu", tr.target_bleu,
                        "Stop early at this held-out BLEU@4");
  train_cmd->add_option("--clip-norm", tr.clip_norm, "Gradient norm cap");
  train_cmd->add_option("--seed", tr.seed, "Init and shuffle seed");
  train_cmd->add_option("--d-m", tr.d_m, "Model width");
  train_cmd->add_option("--n-h", tr.n_h, "Self-attention heads");
  train_cmd->add_option("--n-layers", tr.n_layers, "Encoder/decoder layers");
  train_cmd->add_option("--r", tr.r,
                        "Self-attention radius (-1 for unbounded)");
  train_cmd->add_option("--D", tr.d_cross,
                        "Cross-attention radius (-1 for unbounded)");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Evaluation JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--metrics", ev.metrics_list,
                       "Comma list of bleu,rouge,sync");
  eval_cmd->add_option("--tau", ev.tau, "Attention mass for predicted spans");
  eval_cmd->add_option("--out", ev.out, "Also write the JSON report here");
  eval_cmd->add_option("--csv", ev.csv, "Per-word sync table CSV");

  CaptionArgs cap;
  CLI::App* caption_cmd =
      app.add_subcommand("caption", "Caption motions with a checkpoint");
  caption_cmd->add_option("--ckpt", cap.ckpt, "Checkpoint path")
      ->required()
      ->check(CLI::ExistingFile);
  caption_cmd->add_option("--input", cap.input, "Motion JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  caption_cmd->add_option("--emit-attention", cap.emit_attention,
                          "Directory for per-sample attention and centers CSV");

  VizArgs vz;
  CLI::App* viz_cmd =
      app.add_subcommand("viz", "Render an attention CSV as an SVG heatmap");
  viz_cmd->add_option("--attention", vz.attention, "Attention CSV")
      ->required()
      ->check(CLI::ExistingFile);
  viz_cmd->add_option("--svg", vz.svg, "Output SVG path")->required();
  viz_cmd->add_option("--segments", vz.segments,
                      "Ground-truth bands: JSON [{label, frame_span}]")
      ->check(CLI::ExistingFile);
  viz_cmd->add_option("--aggregate", vz.aggregate,
                      "Average rows: JSON [{label, word_span}]")
      ->check(CLI::ExistingFile);
  viz_cmd->add_option("--tick-stride", vz.tick_stride, "Frame tick spacing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*caption_cmd) return run_caption(cap);
    if (*viz_cmd) return run_viz(vz);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
