#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "syncap/tensor.hpp"

namespace syncap::viz {

// One attention matrix with its row labels: tokens down the side, frame
// indices across the top.
struct AttentionGrid {
  std::vector<std::string> tokens;
  Tensor weights;  // tokens.size() x frames

  void validate() const;
};

// CSV layout: header "token,0,1,...", then one row per token with the token
// string first. Weights round-trip exactly (%.17g).
void write_attention_csv(const AttentionGrid& grid, const std::string& path);
std::string attention_csv_string(const AttentionGrid& grid);
AttentionGrid read_attention_csv(const std::string& path);

// Phrase-level view: each span averages a run of consecutive rows into one
// labeled row. Spans are inclusive row indices.
struct AggregateSpan {
  std::string label;
  std::array<int64_t, 2> word_span{0, 0};
};

AttentionGrid aggregate_rows(const AttentionGrid& grid,
                             const std::vector<AggregateSpan>& spans);

// Ground-truth primitive extent rendered as a translucent vertical band.
struct SegmentBand {
  std::string label;
  std::array<int64_t, 2> frame_span{0, 0};
};

struct HeatmapOptions {
  double cell_width = 14.0;
  double cell_height = 18.0;
  double label_width = 90.0;
  double top_height = 22.0;
  double font_size = 11.0;
  int64_t tick_stride = 10;
};

// White-to-violet cells scaled by the matrix maximum, an outline on each
// row's argmax cell, optional alternating segment bands. Rejects all-zero
// rows (no argmax to mark).
std::string render_heatmap_svg(const AttentionGrid& grid,
                               const HeatmapOptions& options = {},
                               const std::vector<SegmentBand>& bands = {});

}  // namespace syncap::viz
