#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "syncap/tensor.hpp"

namespace syncap::data {

// Ground-truth alignment for one primitive motion: which caption words
// describe it and which frames realize it. Both spans are inclusive.
// word_span indexes whitespace tokens of the raw caption (no BOS offset).
struct Segment {
  std::string label;
  std::array<int64_t, 2> word_span{0, 0};
  std::array<int64_t, 2> frame_span{0, 0};
};

struct Sample {
  std::string id;
  double fps = 20.0;
  Tensor poses;  // T_x x c, c = 3 * kJointCount
  std::string caption;
  std::vector<Segment> segments;
};

inline constexpr int64_t kJointCount = 8;
inline constexpr int64_t kPoseDim = 3 * kJointCount;

// Upper bound on frame-to-frame joint displacement the generator may emit;
// the continuity property test checks real output against it.
inline constexpr double kMaxFrameStep = 0.25;

// Whitespace tokenization; the only tokenizer used anywhere (captions,
// metrics, vocabulary).
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();

  int size() const { return static_cast<int>(id_to_word_.size()); }
  // UNK for unseen words.
  int id_of(const std::string& word) const;
  const std::string& word_of(int id) const;
  bool contains(const std::string& word) const;

  // BOS + word ids + EOS.
  std::vector<int> encode(const std::string& text) const;
  // Joins words, dropping PAD/BOS/EOS.
  std::string decode(const std::vector<int>& ids) const;

  // Insertion order defines ids; used by build_vocab and checkpoint loading.
  void add_word(const std::string& word);
  const std::vector<std::string>& words() const { return id_to_word_; }

 private:
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, int> word_to_id_;
};

// Every corpus word gets an id; order is frequency descending, ties broken
// lexicographically, after the four reserved ids.
Vocab build_vocab(const std::vector<Sample>& corpus);

// Names of the motion primitives, in library order. Doubles as the keyword
// table for synchronization scoring: each caption names its primitives with
// exactly these words.
const std::vector<std::string>& primitive_labels();

// Deterministic synthetic corpus of compositional stick-figure motions.
// Each sample chains k in [min_prims, max_prims] primitives with 5-frame
// linear blends (blend frames belong to the later primitive), captions them
// from templates, and records exact word/frame spans. Identical arguments
// give bitwise-identical output.
std::vector<Sample> generate_corpus(int64_t n, uint64_t seed, int min_prims,
                                    int max_prims);

std::vector<Sample> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<Sample>& dataset, const std::string& path);

}  // namespace syncap::data
