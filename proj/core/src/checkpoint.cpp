#include "syncap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace syncap {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian f64");

namespace {

using nlohmann::ordered_json;

int64_t radius_as_int(Radius r) { return r ? *r : -1; }

Radius radius_from_int(int64_t v) {
  if (v == -1) return std::nullopt;
  return v;
}

ordered_json config_to_obj(const ModelConfig& cfg) {
  ordered_json o;
  o["d_m"] = cfg.d_m;
  o["n_h"] = cfg.n_h;
  o["r"] = radius_as_int(cfg.r);
  o["d_cross"] = radius_as_int(cfg.d_cross);
  o["n_layers"] = cfg.n_layers;
  o["d_ff"] = cfg.d_ff;
  o["max_t_y"] = cfg.max_t_y;
  o["max_t_x"] = cfg.max_t_x;
  o["vocab_size"] = cfg.vocab_size;
  o["c"] = cfg.c;
  return o;
}

int64_t require_int(const ordered_json& o, const char* key, int64_t fallback) {
  if (!o.contains(key)) return fallback;
  const auto& v = o.at(key);
  if (!v.is_number_integer()) {
    throw std::invalid_argument(std::string("model config key '") + key +
                                "' must be an integer");
  }
  return v.get<int64_t>();
}

ModelConfig config_from_obj(const ordered_json& o) {
  if (!o.is_object()) {
    throw std::invalid_argument("model config must be a JSON object");
  }
  static const std::unordered_set<std::string> known = {
      "d_m",  "n_h",     "r",       "d_cross",    "n_layers",
      "d_ff", "max_t_y", "max_t_x", "vocab_size", "c"};
  for (const auto& item : o.items()) {
    if (!known.count(item.key())) {
      throw std::invalid_argument("unknown model config key '" + item.key() +
                                  "'");
    }
  }
  ModelConfig cfg;
  cfg.d_m = require_int(o, "d_m", cfg.d_m);
  cfg.n_h = require_int(o, "n_h", cfg.n_h);
  cfg.r = radius_from_int(require_int(o, "r", radius_as_int(cfg.r)));
  cfg.d_cross =
      radius_from_int(require_int(o, "d_cross", radius_as_int(cfg.d_cross)));
  cfg.n_layers = require_int(o, "n_layers", cfg.n_layers);
  cfg.d_ff = require_int(o, "d_ff", cfg.d_ff);
  cfg.max_t_y = require_int(o, "max_t_y", cfg.max_t_y);
  cfg.max_t_x = require_int(o, "max_t_x", cfg.max_t_x);
  cfg.vocab_size = require_int(o, "vocab_size", cfg.vocab_size);
  cfg.c = require_int(o, "c", cfg.c);
  return cfg;
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error(path + ": " + why);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  return config_to_obj(cfg).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  ordered_json o;
  try {
    o = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  return config_from_obj(o);
}

ModelConfig model_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  try {
    return model_config_from_json(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void save_checkpoint(const std::string& path, const Model& model,
                     const data::Vocab& vocab, int64_t epoch) {
  const auto& params = model.parameters();
  ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["epoch"] = epoch;
  header["config"] = config_to_obj(model.config());
  header["vocab"] = vocab.words();
  ordered_json tensors = ordered_json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : params) {
    ordered_json entry;
    entry["name"] = name;
    entry["rows"] = t.rows();
    entry["cols"] = t.cols();
    entry["offset"] = offset;
    tensors.push_back(std::move(entry));
    offset += t.size() * static_cast<int64_t>(sizeof(double));
  }
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << header.dump() << '\n';
  for (const auto& [name, t] : params) {
    const auto v = t.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) fail(path, "write failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line)) fail(path, "missing header line");

  ordered_json header;
  try {
    header = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    fail(path, std::string("bad header: ") + e.what());
  }
  if (!header.is_object()) fail(path, "header must be a JSON object");
  if (require_int(header, "format_version", -1) != kCheckpointFormatVersion) {
    fail(path, "unsupported format_version");
  }
  const int64_t epoch = require_int(header, "epoch", 0);

  ModelConfig cfg;
  try {
    cfg = config_from_obj(header.at("config"));
    cfg.validate();
  } catch (const std::exception& e) {
    fail(path, std::string("config: ") + e.what());
  }

  if (!header.contains("vocab") || !header.at("vocab").is_array()) {
    fail(path, "missing vocab array");
  }
  const auto words = header.at("vocab").get<std::vector<std::string>>();
  data::Vocab vocab;
  if (static_cast<int64_t>(words.size()) != cfg.vocab_size) {
    fail(path, "vocab size " + std::to_string(words.size()) +
                   " does not match config vocab_size " +
                   std::to_string(cfg.vocab_size));
  }
  for (int i = 0; i < vocab.size(); ++i) {
    if (static_cast<size_t>(i) >= words.size() ||
        words[static_cast<size_t>(i)] != vocab.word_of(i)) {
      fail(path, "vocab must start with the reserved tokens");
    }
  }
  for (size_t i = static_cast<size_t>(vocab.size()); i < words.size(); ++i) {
    vocab.add_word(words[i]);
  }

  LoadedCheckpoint loaded{cfg, std::move(vocab), Model(cfg, 0), epoch};

  if (!header.contains("tensors") || !header.at("tensors").is_array()) {
    fail(path, "missing tensors array");
  }
  const auto& tensors = header.at("tensors");
  auto& params = loaded.model.parameters();
  if (tensors.size() != params.size()) {
    fail(path, "expected " + std::to_string(params.size()) +
                   " tensors, header lists " + std::to_string(tensors.size()));
  }

  std::string blob{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  int64_t expected_offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors.at(i);
    auto& [name, tensor] = params[i];
    const std::string entry_name = entry.at("name").get<std::string>();
    if (entry_name != name) {
      fail(path, "tensor " + std::to_string(i) + " is '" + entry_name +
                     "', expected '" + name + "'");
    }
    const int64_t rows = require_int(entry, "rows", -1);
    const int64_t cols = require_int(entry, "cols", -1);
    const int64_t offset = require_int(entry, "offset", -1);
    if (rows != tensor.rows() || cols != tensor.cols()) {
      fail(path, "tensor '" + name + "' has shape " + std::to_string(rows) +
                     "x" + std::to_string(cols) + ", expected " +
                     tensor.shape_str());
    }
    if (offset != expected_offset) {
      fail(path, "tensor '" + name + "' offset " + std::to_string(offset) +
                     ", expected " + std::to_string(expected_offset));
    }
    const int64_t bytes = tensor.size() * static_cast<int64_t>(sizeof(double));
    if (offset + bytes > static_cast<int64_t>(blob.size())) {
      fail(path, "payload truncated at tensor '" + name + "'");
    }
    std::memcpy(tensor.values_mut().data(), blob.data() + offset,
                static_cast<size_t>(bytes));
    expected_offset += bytes;
  }
  if (expected_offset != static_cast<int64_t>(blob.size())) {
    fail(path, "payload has " + std::to_string(blob.size()) +
                   " bytes, tensors cover " + std::to_string(expected_offset));
  }
  return loaded;
}

}  // namespace syncap
