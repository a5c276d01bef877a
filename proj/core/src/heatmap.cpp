#include "syncap/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace syncap::viz {

namespace {

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string csv_field(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string quoted = "\"";
  for (char ch : field) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  quoted += '"';
  return quoted;
}

// Splits one CSV line honoring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"' && cur.empty()) {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt1(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

// Linear ramp from white to #54278f.
std::string ramp_color(double w01) {
  const auto chan = [w01](int target) {
    return static_cast<int>(std::lround(255.0 + (target - 255.0) * w01));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", chan(0x54), chan(0x27),
                chan(0x8f));
  return buf;
}

}  // namespace

void AttentionGrid::validate() const {
  if (!weights.defined()) {
    throw std::invalid_argument("attention grid has no weights");
  }
  if (static_cast<int64_t>(tokens.size()) != weights.rows()) {
    throw std::invalid_argument(
        "attention grid has " + std::to_string(tokens.size()) +
        " tokens for " + std::to_string(weights.rows()) + " weight rows");
  }
}

std::string attention_csv_string(const AttentionGrid& grid) {
  grid.validate();
  std::ostringstream out;
  out << "token";
  for (int64_t j = 0; j < grid.weights.cols(); ++j) out << ',' << j;
  out << '\n';
  for (int64_t i = 0; i < grid.weights.rows(); ++i) {
    out << csv_field(grid.tokens[static_cast<size_t>(i)]);
    for (int64_t j = 0; j < grid.weights.cols(); ++j) {
      out << ',' << fmt(grid.weights.at(i, j));
    }
    out << '\n';
  }
  return out.str();
}

void write_attention_csv(const AttentionGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << attention_csv_string(grid);
  if (!out) throw std::runtime_error("write failed: " + path);
}

AttentionGrid read_attention_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "token") {
    throw std::runtime_error(path + ": header must be token,0,1,...");
  }
  const int64_t cols = static_cast<int64_t>(header.size()) - 1;
  for (int64_t j = 0; j < cols; ++j) {
    if (header[static_cast<size_t>(j + 1)] != std::to_string(j)) {
      throw std::runtime_error(path + ": header column " + std::to_string(j) +
                               " is '" + header[static_cast<size_t>(j + 1)] +
                               "'");
    }
  }

  AttentionGrid grid;
  std::vector<double> values;
  int64_t rows = 0;
  int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int64_t>(fields.size()) != cols + 1) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(cols + 1));
    }
    grid.tokens.push_back(fields[0]);
    for (int64_t j = 0; j < cols; ++j) {
      const std::string& cell = fields[static_cast<size_t>(j + 1)];
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || cell.empty()) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": bad number '" + cell + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path + ": no data rows");
  grid.weights = Tensor::from_vector(std::move(values), rows, cols);
  return grid;
}

AttentionGrid aggregate_rows(const AttentionGrid& grid,
                             const std::vector<AggregateSpan>& spans) {
  grid.validate();
  if (spans.empty()) throw std::invalid_argument("no aggregation spans");
  const int64_t rows = grid.weights.rows(), cols = grid.weights.cols();
  AttentionGrid out;
  std::vector<double> values;
  for (const AggregateSpan& span : spans) {
    const auto [lo, hi] = span.word_span;
    if (lo < 0 || hi < lo || hi >= rows) {
      throw std::invalid_argument("span [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) +
                                  "] outside the " + std::to_string(rows) +
                                  "-row grid");
    }
    out.tokens.push_back(span.label);
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    for (int64_t j = 0; j < cols; ++j) {
      double sum = 0.0;
      for (int64_t i = lo; i <= hi; ++i) sum += grid.weights.at(i, j);
      values.push_back(sum * inv);
    }
  }
  out.weights = Tensor::from_vector(std::move(values),
                                    static_cast<int64_t>(spans.size()), cols);
  return out;
}

std::string render_heatmap_svg(const AttentionGrid& grid,
                               const HeatmapOptions& options,
                               const std::vector<SegmentBand>& bands) {
  grid.validate();
  if (options.tick_stride < 1) {
    throw std::invalid_argument("tick_stride must be >= 1");
  }
  const int64_t rows = grid.weights.rows(), cols = grid.weights.cols();

  double max_w = 0.0;
  std::vector<int64_t> argmax(static_cast<size_t>(rows), 0);
  for (int64_t i = 0; i < rows; ++i) {
    double row_max = grid.weights.at(i, 0);
    for (int64_t j = 1; j < cols; ++j) {
      if (grid.weights.at(i, j) > row_max) {
        row_max = grid.weights.at(i, j);
        argmax[static_cast<size_t>(i)] = j;
      }
    }
    if (row_max == 0.0) {
      throw std::invalid_argument("all-zero attention row " +
                                  std::to_string(i));
    }
    max_w = std::max(max_w, row_max);
  }
  for (const SegmentBand& band : bands) {
    if (band.frame_span[0] < 0 || band.frame_span[1] < band.frame_span[0] ||
        band.frame_span[1] >= cols) {
      throw std::invalid_argument("segment band '" + band.label +
                                  "' outside frame range");
    }
  }

  const double gx = options.label_width;
  const double gy = options.top_height;
  const double cw = options.cell_width;
  const double ch = options.cell_height;
  const double band_label_height = bands.empty() ? 0.0 : 16.0;
  const double width = gx + cw * static_cast<double>(cols) + 10.0;
  const double height =
      gy + ch * static_cast<double>(rows) + band_label_height + 8.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt1(width)
      << "\" height=\"" << fmt1(height) << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"" << fmt1(width) << "\" height=\"" << fmt1(height)
      << "\" fill=\"white\"/>\n";

  for (int64_t j = 0; j < cols; j += options.tick_stride) {
    svg << "<text class=\"tick\" x=\""
        << fmt1(gx + (static_cast<double>(j) + 0.5) * cw) << "\" y=\""
        << fmt1(gy - 6.0) << "\" font-size=\"" << fmt1(options.font_size - 2.0)
        << "\" text-anchor=\"middle\">" << j << "</text>\n";
  }

  for (int64_t i = 0; i < rows; ++i) {
    svg << "<text class=\"label\" x=\"" << fmt1(gx - 6.0) << "\" y=\""
        << fmt1(gy + (static_cast<double>(i) + 0.7) * ch) << "\" font-size=\""
        << fmt1(options.font_size) << "\" text-anchor=\"end\">"
        << xml_escape(grid.tokens[static_cast<size_t>(i)]) << "</text>\n";
    for (int64_t j = 0; j < cols; ++j) {
      svg << "<rect class=\"cell\" x=\""
          << fmt1(gx + static_cast<double>(j) * cw) << "\" y=\""
          << fmt1(gy + static_cast<double>(i) * ch) << "\" width=\""
          << fmt1(cw) << "\" height=\"" << fmt1(ch) << "\" fill=\""
          << ramp_color(grid.weights.at(i, j) / max_w) << "\"/>\n";
    }
  }

  const char* band_colors[2] = {"#ffd166", "#8ecae6"};
  for (size_t b = 0; b < bands.size(); ++b) {
    const SegmentBand& band = bands[b];
    const double x0 = gx + static_cast<double>(band.frame_span[0]) * cw;
    const double x1 = gx + static_cast<double>(band.frame_span[1] + 1) * cw;
    svg << "<rect class=\"band\" x=\"" << fmt1(x0) << "\" y=\"" << fmt1(gy)
        << "\" width=\"" << fmt1(x1 - x0) << "\" height=\""
        << fmt1(ch * static_cast<double>(rows)) << "\" fill=\""
        << band_colors[b % 2] << "\" fill-opacity=\"0.25\"/>\n";
    svg << "<text class=\"band-label\" x=\"" << fmt1((x0 + x1) / 2.0)
        << "\" y=\"" << fmt1(gy + ch * static_cast<double>(rows) + 12.0)
        << "\" font-size=\"" << fmt1(options.font_size - 2.0)
        << "\" text-anchor=\"middle\">" << xml_escape(band.label)
        << "</text>\n";
  }

  for (int64_t i = 0; i < rows; ++i) {
    svg << "<rect class=\"argmax\" x=\""
        << fmt1(gx + static_cast<double>(argmax[static_cast<size_t>(i)]) * cw)
        << "\" y=\"" << fmt1(gy + static_cast<double>(i) * ch) << "\" width=\""
        << fmt1(cw) << "\" height=\"" << fmt1(ch)
        << "\" fill=\"none\" stroke=\"#7f00ff\" stroke-width=\"2\"/>\n";
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace syncap::viz
