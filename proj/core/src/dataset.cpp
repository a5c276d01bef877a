#include "syncap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "syncap/rng.hpp"

namespace syncap::data {

namespace {

using nlohmann::ordered_json;

enum Joint : int {
  kPelvis = 0,
  kChest,
  kHead,
  kNose,
  kLHand,
  kRHand,
  kLFoot,
  kRFoot
};

// Local joint offsets of the resting stick figure: x lateral (left
// positive), y up, z forward, all in the figure's own frame.
constexpr double kNeutral[kJointCount][3] = {
    {0.00, 0.90, 0.00},   // pelvis
    {0.00, 1.35, 0.00},   // chest
    {0.00, 1.65, 0.00},   // head
    {0.00, 1.65, 0.12},   // nose
    {0.35, 0.95, 0.00},   // lhand
    {-0.35, 0.95, 0.00},  // rhand
    {0.15, 0.05, 0.00},   // lfoot
    {-0.15, 0.05, 0.00},  // rfoot
};

constexpr int kBlendFrames = 5;
constexpr int kMinPrimFrames = 22;
constexpr int kMaxPrimFrames = 58;

// Flat-topped envelope: smooth rise over the first three tenths, hold at one,
// smooth fall over the last three tenths. A primitive reaches full amplitude
// within a few frames of its onset, so a decoder peeking at an upcoming
// segment through a narrow attention window sees real evidence instead of a
// faded ramp; a steeper rise would outrun the seam blend and violate the
// per-frame step bound.
double bump(double s) {
  constexpr double w = 0.3;
  const double edge = s < w ? s / w : (s > 1.0 - w ? (1.0 - s) / w : 1.0);
  return edge * edge * (3.0 - 2.0 * edge);
}

struct BodyState {
  double heading = 0.0;
};

struct PrimitiveDef {
  const char* label;
  // Alternative complement phrases following the label word; for "turn"
  // the phrase is keyed by the drawn direction instead.
  std::vector<const char*> complements;
  bool directional;
};

const std::vector<PrimitiveDef>& primitive_defs() {
  // Complements are ordered short phrase first with word counts 1 through 5
  // across the five length bands, so a clause's token count tracks its frame
  // count and the attention advance per token stays near constant over the
  // corpus even though segment durations vary widely.
  static const std::vector<PrimitiveDef> defs = {
      {"walk",
       {"forward", "straight ahead", "a few steps", "quite a long way",
        "for quite a long while"},
       false},
      {"turn",
       {"to the left", "around to the left", "to the right",
        "around to the right"},
       true},
      {"sit",
       {"down", "down slowly", "down to rest", "all the way down",
        "all the way down slowly"},
       false},
      {"stand",
       {"up", "up again", "up once more", "up with arms raised",
        "up tall with arms raised"},
       false},
      {"wave",
       {"briefly", "at someone", "with one hand", "with the right hand",
        "with the right hand raised"},
       false},
      {"jump",
       {"once", "in place", "high in place", "straight up and down",
        "high up off the ground"},
       false},
      {"pick",
       {"up", "something up", "up an object", "up a small object",
        "up a very small object"},
       false},
      {"kick",
       {"forward", "out forward", "with one foot", "with the right foot",
        "out with the right foot"},
       false},
      {"bend",
       {"sideways", "over sideways", "to one side", "over to one side",
        "far over to one side"},
       false},
      {"clap",
       {"twice", "two times", "with both hands", "quickly with both hands",
        "many times with both hands"},
       false},
  };
  return defs;
}

const std::vector<const char*> kOpeners = {"a person", "the person", "someone"};
const std::vector<const char*> kConnectors = {"then", "and then", "and"};

// Fills local joint offsets for frame i of the primitive and advances the
// persistent body state to the next frame. dir is -1 or +1 and only
// meaningful for "turn".
void primitive_pose(int prim, int i, int frames, int dir, BodyState& state,
                    double local[kJointCount][3]) {
  for (int j = 0; j < kJointCount; ++j) {
    local[j][0] = kNeutral[j][0];
    local[j][1] = kNeutral[j][1];
    local[j][2] = kNeutral[j][2];
  }
  const double s = static_cast<double>(i) / static_cast<double>(frames - 1);
  const double env = bump(s);
  const double pi = std::numbers::pi;

  switch (prim) {
    case 0: {  // walk: legs and arms swing in antiphase, body stays in place
      const int cycles = std::max(1, (frames + 10) / 20);
      const double phase =
          2.0 * pi * cycles * static_cast<double>(i) / static_cast<double>(frames);
      const double swing = std::sin(phase);
      local[kLFoot][2] += 0.18 * swing;
      local[kRFoot][2] -= 0.18 * swing;
      local[kLHand][2] -= 0.10 * swing;
      local[kRHand][2] += 0.10 * swing;
      local[kLFoot][1] += 0.05 * std::max(0.0, swing);
      local[kRFoot][1] += 0.05 * std::max(0.0, -swing);
      break;
    }
    case 1: {  // turn: heading sweeps a quarter circle, posture stays neutral
      state.heading += dir * (pi / 2.0) / static_cast<double>(frames);
      break;
    }
    case 2: {  // sit: upper body lowers and shifts back
      const double drop = 0.35 * env;
      local[kPelvis][1] -= drop;
      local[kChest][1] -= drop;
      local[kHead][1] -= drop;
      local[kNose][1] -= drop;
      local[kLHand][1] -= 0.25 * env;
      local[kRHand][1] -= 0.25 * env;
      local[kPelvis][2] -= 0.10 * env;
      break;
    }
    case 3: {  // stand: stretch up tall with arms overhead, heels planted
      const double rise = 0.25 * env;
      local[kPelvis][1] += rise;
      local[kChest][1] += rise;
      local[kHead][1] += rise;
      local[kNose][1] += rise;
      local[kLHand][1] += 0.45 * env;
      local[kRHand][1] += 0.45 * env;
      break;
    }
    case 4: {  // wave: right hand raised and oscillating sideways
      local[kRHand][1] += 0.55 * env;
      local[kRHand][0] += 0.12 * env * std::sin(6.0 * pi * s);
      break;
    }
    case 5: {  // jump: the figure leaves the ground with legs tucked, arms up
      const double lift = 0.50 * env;
      for (int j = 0; j < kJointCount; ++j) local[j][1] += lift;
      local[kLFoot][1] += 0.20 * env;
      local[kRFoot][1] += 0.20 * env;
      local[kLHand][1] += 0.20 * env;
      local[kRHand][1] += 0.20 * env;
      break;
    }
    case 6: {  // pick: lean forward and reach down with the right hand
      local[kChest][1] -= 0.25 * env;
      local[kChest][2] += 0.20 * env;
      local[kHead][1] -= 0.45 * env;
      local[kHead][2] += 0.35 * env;
      local[kNose][1] -= 0.45 * env;
      local[kNose][2] += 0.38 * env;
      local[kRHand][1] -= 0.60 * env;
      local[kRHand][2] += 0.25 * env;
      break;
    }
    case 7: {  // kick: right foot thrust forward and up
      local[kRFoot][2] += 0.45 * env;
      local[kRFoot][1] += 0.35 * env;
      local[kChest][2] -= 0.08 * env;
      break;
    }
    case 8: {  // bend: lateral lean of the upper body
      local[kChest][0] += 0.25 * env;
      local[kHead][0] += 0.40 * env;
      local[kNose][0] += 0.40 * env;
      break;
    }
    case 9: {  // clap: hands meet in front of the chest
      local[kLHand][0] -= 0.30 * env;
      local[kRHand][0] += 0.30 * env;
      local[kLHand][1] += 0.35 * env;
      local[kRHand][1] += 0.35 * env;
      local[kLHand][2] += 0.15 * env;
      local[kRHand][2] += 0.15 * env;
      break;
    }
    default:
      throw std::logic_error("unknown primitive index " + std::to_string(prim));
  }
}

void world_frame(const BodyState& state, const double local[kJointCount][3],
                 double* out) {
  const double ch = std::cos(state.heading);
  const double sh = std::sin(state.heading);
  for (int j = 0; j < kJointCount; ++j) {
    const double lx = local[j][0], ly = local[j][1], lz = local[j][2];
    out[3 * j + 0] = lx * ch + lz * sh;
    out[3 * j + 1] = ly;
    out[3 * j + 2] = -lx * sh + lz * ch;
  }
}

Sample generate_sample(uint64_t seed, int64_t index, int min_prims,
                       int max_prims) {
  Rng rng = Rng::for_stream(seed, static_cast<uint64_t>(index));
  const auto& defs = primitive_defs();
  const int k = static_cast<int>(rng.uniform_int(min_prims, max_prims));

  struct Plan {
    int prim;
    int frames;
    int dir;   // -1/+1, turn only
    int comp;  // complement phrase index
  };
  std::vector<Plan> plans;
  int prev = -1;
  for (int j = 0; j < k; ++j) {
    int prim;
    // A third segment usually repeats the opening primitive. Identical
    // content at two separate times means the matching word can only be
    // localized by tracking time, not by matching appearance.
    if (j == 2 && rng.uniform_int(0, 9) < 7) {
      prim = plans[0].prim;
    } else {
      do {
        prim = static_cast<int>(
            rng.uniform_int(0, static_cast<int64_t>(defs.size()) - 1));
      } while (prim == prev);
    }
    prev = prim;
    Plan p;
    p.prim = prim;
    p.frames = static_cast<int>(rng.uniform_int(kMinPrimFrames, kMaxPrimFrames));
    // Every phrase choice is keyed to the motion itself (direction, segment
    // length, primitive identity), never drawn independently: a caption must
    // be predictable from the poses or no captioner can learn it.
    const int span = kMaxPrimFrames - kMinPrimFrames + 1;
    if (defs[prim].directional) {
      p.dir = rng.uniform_int(0, 1) == 0 ? 1 : -1;
      p.comp = (p.dir > 0 ? 0 : 2) + (p.frames - kMinPrimFrames) * 2 / span;
    } else {
      p.dir = 1;
      const int n = static_cast<int>(defs[prim].complements.size());
      p.comp = (p.frames - kMinPrimFrames) * n / span;
    }
    plans.push_back(p);
  }
  const int opener = plans[0].prim % 3;
  std::vector<int> connectors;
  for (int j = 1; j < k; ++j) {
    connectors.push_back(plans[j].prim % 3);
  }

  // Motion synthesis. Each primitive starts from the neutral stance facing
  // forward, so its joint trajectory reads the same wherever it lands in a
  // sequence; the blend below smooths the seams.
  int64_t total_frames = 0;
  for (const Plan& p : plans) total_frames += p.frames;
  std::vector<double> frames(static_cast<size_t>(total_frames * kPoseDim));
  std::vector<int64_t> starts;
  int64_t row = 0;
  for (const Plan& p : plans) {
    starts.push_back(row);
    BodyState state;
    for (int i = 0; i < p.frames; ++i, ++row) {
      double local[kJointCount][3];
      primitive_pose(p.prim, i, p.frames, p.dir, state, local);
      world_frame(state, local, frames.data() + row * kPoseDim);
    }
  }

  // Linear blends: the first kBlendFrames frames of each later primitive
  // are faded in from the previous primitive's final frame.
  for (size_t b = 1; b < starts.size(); ++b) {
    const int64_t at = starts[b];
    std::array<double, kPoseDim> prev_last;
    std::copy_n(frames.data() + (at - 1) * kPoseDim, kPoseDim, prev_last.begin());
    for (int i = 0; i < kBlendFrames; ++i) {
      const double lam = static_cast<double>(i + 1) / kBlendFrames;
      double* f = frames.data() + (at + i) * kPoseDim;
      for (int64_t d = 0; d < kPoseDim; ++d) {
        f[d] = (1.0 - lam) * prev_last[static_cast<size_t>(d)] + lam * f[d];
      }
    }
  }

  // Root centering: subtract the sequence-mean pelvis position everywhere.
  double mean[3] = {0.0, 0.0, 0.0};
  for (int64_t t = 0; t < total_frames; ++t) {
    for (int d = 0; d < 3; ++d) mean[d] += frames[t * kPoseDim + d];
  }
  for (double& m : mean) m /= static_cast<double>(total_frames);
  for (int64_t t = 0; t < total_frames; ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      for (int d = 0; d < 3; ++d) frames[t * kPoseDim + 3 * j + d] -= mean[d];
    }
  }

  // Caption and spans.
  std::vector<std::string> words = tokenize(kOpeners[opener]);
  Sample sample;
  int64_t frame_cursor = 0;
  for (int j = 0; j < k; ++j) {
    if (j > 0) {
      for (const std::string& w : tokenize(kConnectors[connectors[j - 1]])) {
        words.push_back(w);
      }
    }
    const Plan& p = plans[j];
    Segment seg;
    seg.label = defs[p.prim].label;
    seg.word_span[0] = static_cast<int64_t>(words.size());
    words.push_back(seg.label);
    for (const std::string& w : tokenize(defs[p.prim].complements[p.comp])) {
      words.push_back(w);
    }
    seg.word_span[1] = static_cast<int64_t>(words.size()) - 1;
    seg.frame_span[0] = frame_cursor;
    seg.frame_span[1] = frame_cursor + p.frames - 1;
    frame_cursor += p.frames;
    sample.segments.push_back(std::move(seg));
  }

  std::ostringstream id;
  id << "sample-";
  id.width(6);
  id.fill('0');
  id << index;
  sample.id = id.str();
  sample.fps = 20.0;
  sample.poses = Tensor::from_vector(std::move(frames), total_frames, kPoseDim);
  std::ostringstream cap;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) cap << ' ';
    cap << words[i];
  }
  sample.caption = cap.str();
  return sample;
}

[[noreturn]] void record_error(const std::string& path, int64_t line,
                               const std::string& what) {
  throw std::runtime_error(path + ": line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

Vocab::Vocab() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_word(w);
}

int Vocab::id_of(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::word_of(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("vocab id " + std::to_string(id) +
                            " out of range [0, " + std::to_string(size()) + ")");
  }
  return id_to_word_[static_cast<size_t>(id)];
}

bool Vocab::contains(const std::string& word) const {
  return word_to_id_.count(word) != 0;
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids = {kBos};
  for (const std::string& w : tokenize(text)) ids.push_back(id_of(w));
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::ostringstream out;
  bool first = true;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!first) out << ' ';
    out << word_of(id);
    first = false;
  }
  return out.str();
}

void Vocab::add_word(const std::string& word) {
  if (word_to_id_.count(word)) {
    throw std::logic_error("vocab already contains \"" + word + "\"");
  }
  word_to_id_[word] = size();
  id_to_word_.push_back(word);
}

Vocab build_vocab(const std::vector<Sample>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, int64_t> freq;
  for (const Sample& s : corpus) {
    for (const std::string& w : tokenize(s.caption)) ++freq[w];
  }
  std::vector<std::pair<std::string, int64_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab;
  for (const auto& [word, count] : entries) {
    if (!vocab.contains(word)) vocab.add_word(word);
  }
  return vocab;
}

const std::vector<std::string>& primitive_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> out;
    for (const PrimitiveDef& d : primitive_defs()) out.emplace_back(d.label);
    return out;
  }();
  return labels;
}

std::vector<Sample> generate_corpus(int64_t n, uint64_t seed, int min_prims,
                                    int max_prims) {
  if (min_prims < 1 || min_prims > max_prims || max_prims > 4) {
    throw std::invalid_argument("generate_corpus: need 1 <= min_prims <= max_prims <= 4, got " +
                                std::to_string(min_prims) + ".." +
                                std::to_string(max_prims));
  }
  if (n < 0) throw std::invalid_argument("generate_corpus: negative sample count");
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(generate_sample(seed, i, min_prims, max_prims));
  }
  return out;
}

std::vector<Sample> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Sample> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json o;
    try {
      o = ordered_json::parse(line);
    } catch (const std::exception& e) {
      record_error(path, lineno, std::string("parse error: ") + e.what());
    }
    for (const char* field : {"poses", "caption"}) {
      if (!o.contains(field)) {
        record_error(path, lineno, std::string("missing field \"") + field + "\"");
      }
    }
    Sample s;
    s.id = o.contains("id") ? o["id"].get<std::string>()
                            : "line-" + std::to_string(lineno);
    s.fps = o.contains("fps") ? o["fps"].get<double>() : 20.0;
    const auto& poses = o["poses"];
    if (!poses.is_array() || poses.empty() || !poses[0].is_array()) {
      record_error(path, lineno, "\"poses\" must be a non-empty array of rows");
    }
    const int64_t t_x = static_cast<int64_t>(poses.size());
    const int64_t c = static_cast<int64_t>(poses[0].size());
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(t_x * c));
    for (const auto& prow : poses) {
      if (static_cast<int64_t>(prow.size()) != c) {
        record_error(path, lineno, "ragged \"poses\" rows");
      }
      for (const auto& v : prow) flat.push_back(v.get<double>());
    }
    s.poses = Tensor::from_vector(std::move(flat), t_x, c);
    s.caption = o["caption"].get<std::string>();
    if (o.contains("segments")) {
      for (const auto& jseg : o["segments"]) {
        for (const char* field : {"label", "word_span", "frame_span"}) {
          if (!jseg.contains(field)) {
            record_error(path, lineno,
                         std::string("segment missing field \"") + field + "\"");
          }
        }
        Segment seg;
        seg.label = jseg["label"].get<std::string>();
        seg.word_span = {jseg["word_span"][0].get<int64_t>(),
                         jseg["word_span"][1].get<int64_t>()};
        seg.frame_span = {jseg["frame_span"][0].get<int64_t>(),
                          jseg["frame_span"][1].get<int64_t>()};
        s.segments.push_back(std::move(seg));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_jsonl(const std::vector<Sample>& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Sample& s : dataset) {
    ordered_json o;
    o["id"] = s.id;
    o["fps"] = s.fps;
    ordered_json rows = ordered_json::array();
    for (int64_t t = 0; t < s.poses.rows(); ++t) {
      ordered_json prow = ordered_json::array();
      for (int64_t d = 0; d < s.poses.cols(); ++d) prow.push_back(s.poses.at(t, d));
      rows.push_back(std::move(prow));
    }
    o["poses"] = std::move(rows);
    o["caption"] = s.caption;
    ordered_json segs = ordered_json::array();
    for (const Segment& seg : s.segments) {
      ordered_json jseg;
      jseg["label"] = seg.label;
      jseg["word_span"] = {seg.word_span[0], seg.word_span[1]};
      jseg["frame_span"] = {seg.frame_span[0], seg.frame_span[1]};
      segs.push_back(std::move(jseg));
    }
    o["segments"] = std::move(segs);
    out << o.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failure on " + path);
}

}  // namespace syncap::data
