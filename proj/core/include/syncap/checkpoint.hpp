#pragma once

#include <cstdint>
#include <string>

#include "syncap/dataset.hpp"
#include "syncap/model.hpp"

namespace syncap {

// Single-file snapshot: one JSON header line (format version, epoch, model
// config, vocabulary, tensor layout), then the concatenated little-endian
// f64 payload. Byte-identical for identical model state.
inline constexpr int64_t kCheckpointFormatVersion = 1;

// Window radii serialize as plain integers; -1 means unbounded.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);
ModelConfig model_config_from_json_file(const std::string& path);

void save_checkpoint(const std::string& path, const Model& model,
                     const data::Vocab& vocab, int64_t epoch = 0);

struct LoadedCheckpoint {
  ModelConfig config;
  data::Vocab vocab;
  Model model;
  int64_t epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace syncap
