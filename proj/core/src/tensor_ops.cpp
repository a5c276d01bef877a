#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "syncap/tensor.hpp"

namespace syncap {

namespace {

using detail::TensorData;
using DataPtr = std::shared_ptr<TensorData>;

DataPtr impl(const Tensor& t) { return detail::storage(t); }

[[noreturn]] void shape_error(const std::string& op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

Tensor make_output(int64_t rows, int64_t cols, bool requires_grad) {
  return Tensor::zeros(rows, cols, requires_grad);
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) {
  return a.requires_grad() || b.requires_grad();
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output(m, n, any_grad(a, b));

  auto ad = impl(a), bd = impl(b), od = impl(out);
  {
    const double* pa = ad->value.data();
    const double* pb = bd->value.data();
    double* po = od->value.data();
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t t = 0; t < k; ++t) {
        const double av = pa[i * k + t];
        const double* brow = pb + t * n;
        double* orow = po + i * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }

  if (out.requires_grad()) {
    tape.record([ad, bd, od, m, k, n] {
      const double* g = od->grad.data();
      if (ad->requires_grad) {
        // dA = dC * B^T
        double* ga = ad->grad.data();
        const double* pb = bd->value.data();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t t = 0; t < k; ++t) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb + t * n;
            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + t] += acc;
          }
        }
      }
      if (bd->requires_grad) {
        // dB = A^T * dC
        double* gb = bd->grad.data();
        const double* pa = ad->value.data();
        for (int64_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (int64_t t = 0; t < k; ++t) {
            const double av = pa[i * k + t];
            double* gbrow = gb + t * n;
            for (int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a, b));
  auto ad = impl(a), bd = impl(b), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) {
    od->value[i] = ad->value[i] + bd->value[i];
  }
  if (out.requires_grad()) {
    tape.record([ad, bd, od] {
      if (ad->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (bd->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("sub", a, b);
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a, b));
  auto ad = impl(a), bd = impl(b), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) {
    od->value[i] = ad->value[i] - bd->value[i];
  }
  if (out.requires_grad()) {
    tape.record([ad, bd, od] {
      if (ad->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (bd->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] -= od->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("mul", a, b);
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a, b));
  auto ad = impl(a), bd = impl(b), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) {
    od->value[i] = ad->value[i] * bd->value[i];
  }
  if (out.requires_grad()) {
    tape.record([ad, bd, od] {
      if (ad->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) {
          ad->grad[i] += od->grad[i] * bd->value[i];
        }
      }
      if (bd->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) {
          bd->grad[i] += od->grad[i] * ad->value[i];
        }
      }
    });
  }
  return out;
}

Tensor add_row_broadcast(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    shape_error("add_row_broadcast", a, bias);
  }
  const int64_t r = a.rows(), c = a.cols();
  Tensor out = make_output(r, c, any_grad(a, bias));
  auto ad = impl(a), bd = impl(bias), od = impl(out);
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      od->value[i * c + j] = ad->value[i * c + j] + bd->value[j];
    }
  }
  if (out.requires_grad()) {
    tape.record([ad, bd, od, r, c] {
      if (ad->requires_grad) {
        for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
      }
      if (bd->requires_grad) {
        for (int64_t i = 0; i < r; ++i) {
          for (int64_t j = 0; j < c; ++j) bd->grad[j] += od->grad[i * c + j];
        }
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double k) {
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) od->value[i] = ad->value[i] * k;
  if (out.requires_grad()) {
    tape.record([ad, od, k] {
      for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * k;
    });
  }
  return out;
}

Tensor add_const(Tape& tape, const Tensor& a, double k) {
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) od->value[i] = ad->value[i] + k;
  if (out.requires_grad()) {
    tape.record([ad, od] {
      for (size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) {
    od->value[i] = ad->value[i] > 0.0 ? ad->value[i] : 0.0;
  }
  if (out.requires_grad()) {
    tape.record([ad, od] {
      for (size_t i = 0; i < od->grad.size(); ++i) {
        if (ad->value[i] > 0.0) ad->grad[i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor square(Tape& tape, const Tensor& a) {
  Tensor out = make_output(a.rows(), a.cols(), any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (size_t i = 0; i < od->value.size(); ++i) {
    od->value[i] = ad->value[i] * ad->value[i];
  }
  if (out.requires_grad()) {
    tape.record([ad, od] {
      for (size_t i = 0; i < od->grad.size(); ++i) {
        ad->grad[i] += 2.0 * ad->value[i] * od->grad[i];
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = make_output(1, 1, any_grad(a));
  auto ad = impl(a), od = impl(out);
  double acc = 0.0;
  for (double v : ad->value) acc += v;
  od->value[0] = acc;
  if (out.requires_grad()) {
    tape.record([ad, od] {
      const double g = od->grad[0];
      for (double& gi : ad->grad) gi += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  Tensor out = make_output(1, 1, any_grad(a));
  auto ad = impl(a), od = impl(out);
  double acc = 0.0;
  for (double v : ad->value) acc += v;
  const double inv_n = 1.0 / static_cast<double>(ad->value.size());
  od->value[0] = acc * inv_n;
  if (out.requires_grad()) {
    tape.record([ad, od, inv_n] {
      const double g = od->grad[0] * inv_n;
      for (double& gi : ad->grad) gi += g;
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  const int64_t r = a.rows(), c = a.cols();
  Tensor out = make_output(c, r, any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) od->value[j * r + i] = ad->value[i * c + j];
  }
  if (out.requires_grad()) {
    tape.record([ad, od, r, c] {
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) ad->grad[i * c + j] += od->grad[j * r + i];
      }
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& a, int64_t first, int64_t count) {
  if (first < 0 || count < 1 || first + count > a.rows()) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(first) +
                                ", +" + std::to_string(count) +
                                ") out of bounds for " + a.shape_str());
  }
  const int64_t c = a.cols();
  Tensor out = make_output(count, c, any_grad(a));
  auto ad = impl(a), od = impl(out);
  std::copy_n(ad->value.begin() + first * c, count * c, od->value.begin());
  if (out.requires_grad()) {
    tape.record([ad, od, first, count, c] {
      for (int64_t i = 0; i < count * c; ++i) {
        ad->grad[first * c + i] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, int64_t first, int64_t count) {
  if (first < 0 || count < 1 || first + count > a.cols()) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(first) +
                                ", +" + std::to_string(count) +
                                ") out of bounds for " + a.shape_str());
  }
  const int64_t r = a.rows(), c = a.cols();
  Tensor out = make_output(r, count, any_grad(a));
  auto ad = impl(a), od = impl(out);
  for (int64_t i = 0; i < r; ++i) {
    std::copy_n(ad->value.begin() + i * c + first, count,
                od->value.begin() + i * count);
  }
  if (out.requires_grad()) {
    tape.record([ad, od, first, count, r, c] {
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < count; ++j) {
          ad->grad[i * c + first + j] += od->grad[i * count + j];
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int64_t c = parts.front().cols();
  int64_t r = 0;
  bool need_grad = false;
  for (const Tensor& p : parts) {
    if (p.cols() != c) shape_error("concat_rows", parts.front(), p);
    r += p.rows();
    need_grad = need_grad || p.requires_grad();
  }
  Tensor out = make_output(r, c, need_grad);
  auto od = impl(out);
  std::vector<DataPtr> pds;
  pds.reserve(parts.size());
  int64_t row0 = 0;
  for (const Tensor& p : parts) {
    auto pd = impl(p);
    std::copy(pd->value.begin(), pd->value.end(), od->value.begin() + row0 * c);
    row0 += p.rows();
    pds.push_back(std::move(pd));
  }
  if (out.requires_grad()) {
    tape.record([pds, od, c] {
      int64_t row = 0;
      for (const auto& pd : pds) {
        if (pd->requires_grad) {
          for (size_t i = 0; i < pd->grad.size(); ++i) {
            pd->grad[i] += od->grad[row * c + static_cast<int64_t>(i)];
          }
        }
        row += pd->rows;
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int64_t r = parts.front().rows();
  int64_t c = 0;
  bool need_grad = false;
  for (const Tensor& p : parts) {
    if (p.rows() != r) shape_error("concat_cols", parts.front(), p);
    c += p.cols();
    need_grad = need_grad || p.requires_grad();
  }
  Tensor out = make_output(r, c, need_grad);
  auto od = impl(out);
  std::vector<DataPtr> pds;
  pds.reserve(parts.size());
  int64_t col0 = 0;
  for (const Tensor& p : parts) {
    auto pd = impl(p);
    const int64_t pc = p.cols();
    for (int64_t i = 0; i < r; ++i) {
      std::copy_n(pd->value.begin() + i * pc, pc,
                  od->value.begin() + i * c + col0);
    }
    col0 += pc;
    pds.push_back(std::move(pd));
  }
  if (out.requires_grad()) {
    tape.record([pds, od, r, c] {
      int64_t col = 0;
      for (const auto& pd : pds) {
        const int64_t pc = pd->cols;
        if (pd->requires_grad) {
          for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < pc; ++j) {
              pd->grad[i * pc + j] += od->grad[i * c + col + j];
            }
          }
        }
        col += pc;
      }
    });
  }
  return out;
}

Tensor masked_softmax(Tape& tape, const Tensor& scores, const Tensor& mask) {
  if (!scores.same_shape(mask)) shape_error("masked_softmax", scores, mask);
  const int64_t r = scores.rows(), c = scores.cols();
  Tensor out = make_output(r, c, any_grad(scores));
  auto sd = impl(scores), md = impl(mask), od = impl(out);

  for (int64_t i = 0; i < r; ++i) {
    const double* srow = sd->value.data() + i * c;
    const double* mrow = md->value.data() + i * c;
    double* orow = od->value.data() + i * c;
    double hi = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < c; ++j) {
      if (mrow[j] != 0.0 && srow[j] > hi) hi = srow[j];
    }
    if (hi == -std::numeric_limits<double>::infinity()) {
      throw std::domain_error("masked_softmax: fully masked row " +
                              std::to_string(i));
    }
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      if (mrow[j] != 0.0) {
        orow[j] = std::exp(srow[j] - hi);
        denom += orow[j];
      }  // masked entries stay exactly +0.0
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < c; ++j) {
      if (mrow[j] != 0.0) orow[j] *= inv;
    }
  }

  if (out.requires_grad()) {
    tape.record([sd, md, od, r, c] {
      for (int64_t i = 0; i < r; ++i) {
        const double* mrow = md->value.data() + i * c;
        const double* yrow = od->value.data() + i * c;
        const double* grow = od->grad.data() + i * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) {
          if (mrow[j] != 0.0) dot += yrow[j] * grow[j];
        }
        double* srow = sd->grad.data() + i * c;
        for (int64_t j = 0; j < c; ++j) {
          if (mrow[j] != 0.0) srow[j] += yrow[j] * (grow[j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& shift, double eps) {
  if (x.cols() < 2) {
    throw std::invalid_argument("layer_norm: needs width >= 2, got " +
                                x.shape_str());
  }
  if (gain.rows() != 1 || gain.cols() != x.cols()) shape_error("layer_norm", x, gain);
  if (shift.rows() != 1 || shift.cols() != x.cols()) shape_error("layer_norm", x, shift);
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be > 0");

  const int64_t r = x.rows(), c = x.cols();
  Tensor out = make_output(r, c, x.requires_grad() || gain.requires_grad() ||
                                     shift.requires_grad());
  auto xd = impl(x), gd = impl(gain), sd = impl(shift), od = impl(out);

  // Kept for the backward pass.
  auto normed = std::make_shared<std::vector<double>>(static_cast<size_t>(r * c));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(r));

  const double inv_c = 1.0 / static_cast<double>(c);
  for (int64_t i = 0; i < r; ++i) {
    const double* xrow = xd->value.data() + i * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += xrow[j];
    mu *= inv_c;
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = xrow[j] - mu;
      var += d * d;
    }
    var *= inv_c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = is;
    double* nrow = normed->data() + i * c;
    double* orow = od->value.data() + i * c;
    for (int64_t j = 0; j < c; ++j) {
      nrow[j] = (xrow[j] - mu) * is;
      orow[j] = nrow[j] * gd->value[j] + sd->value[j];
    }
  }

  if (out.requires_grad()) {
    tape.record([xd, gd, sd, od, normed, inv_std, r, c, inv_c] {
      for (int64_t i = 0; i < r; ++i) {
        const double* grow = od->grad.data() + i * c;
        const double* nrow = normed->data() + i * c;
        if (gd->requires_grad) {
          for (int64_t j = 0; j < c; ++j) gd->grad[j] += grow[j] * nrow[j];
        }
        if (sd->requires_grad) {
          for (int64_t j = 0; j < c; ++j) sd->grad[j] += grow[j];
        }
        if (xd->requires_grad) {
          // dx = (dn - mean(dn) - n * mean(dn * n)) * inv_std, dn = dy * gain
          double mean_dn = 0.0, mean_dnn = 0.0;
          for (int64_t j = 0; j < c; ++j) {
            const double dn = grow[j] * gd->value[j];
            mean_dn += dn;
            mean_dnn += dn * nrow[j];
          }
          mean_dn *= inv_c;
          mean_dnn *= inv_c;
          const double is = (*inv_std)[static_cast<size_t>(i)];
          double* xg = xd->grad.data() + i * c;
          for (int64_t j = 0; j < c; ++j) {
            const double dn = grow[j] * gd->value[j];
            xg[j] += (dn - mean_dn - nrow[j] * mean_dnn) * is;
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(Tape& tape, const Tensor& x) {
  const int64_t r = x.rows(), c = x.cols();
  Tensor out = make_output(r, c, any_grad(x));
  auto xd = impl(x), od = impl(out);
  for (int64_t i = 0; i < r; ++i) {
    const double* xrow = xd->value.data() + i * c;
    double hi = xrow[0];
    for (int64_t j = 1; j < c; ++j) hi = std::max(hi, xrow[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(xrow[j] - hi);
    const double lse = hi + std::log(denom);
    double* orow = od->value.data() + i * c;
    for (int64_t j = 0; j < c; ++j) orow[j] = xrow[j] - lse;
  }
  if (out.requires_grad()) {
    tape.record([xd, od, r, c] {
      for (int64_t i = 0; i < r; ++i) {
        const double* grow = od->grad.data() + i * c;
        const double* orow = od->value.data() + i * c;
        double gsum = 0.0;
        for (int64_t j = 0; j < c; ++j) gsum += grow[j];
        double* xg = xd->grad.data() + i * c;
        for (int64_t j = 0; j < c; ++j) {
          xg[j] += grow[j] - std::exp(orow[j]) * gsum;
        }
      }
    });
  }
  return out;
}

Tensor pick_per_row(Tape& tape, const Tensor& x, std::span<const int> ids) {
  const int64_t r = x.rows(), c = x.cols();
  if (static_cast<int64_t>(ids.size()) != r) {
    throw std::invalid_argument("pick_per_row: need one index per row, got " +
                                std::to_string(ids.size()) + " for " +
                                x.shape_str());
  }
  for (int64_t i = 0; i < r; ++i) {
    if (ids[i] < 0 || ids[i] >= c) {
      throw std::out_of_range("pick_per_row: index " + std::to_string(ids[i]) +
                              " out of range [0, " + std::to_string(c) + ")");
    }
  }
  Tensor out = make_output(r, 1, any_grad(x));
  auto xd = impl(x), od = impl(out);
  std::vector<int> idv(ids.begin(), ids.end());
  for (int64_t i = 0; i < r; ++i) od->value[i] = xd->value[i * c + idv[i]];
  if (out.requires_grad()) {
    tape.record([xd, od, idv, c] {
      for (size_t i = 0; i < idv.size(); ++i) {
        xd->grad[static_cast<int64_t>(i) * c + idv[i]] += od->grad[i];
      }
    });
  }
  return out;
}

Tensor embed_rows(Tape& tape, const Tensor& table, std::span<const int> ids) {
  const int64_t v = table.rows(), d = table.cols();
  const int64_t t = static_cast<int64_t>(ids.size());
  if (t == 0) throw std::invalid_argument("embed_rows: empty index list");
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::out_of_range("embed_rows: id " + std::to_string(id) +
                              " out of range [0, " + std::to_string(v) + ")");
    }
  }
  Tensor out = make_output(t, d, any_grad(table));
  auto td = impl(table), od = impl(out);
  std::vector<int> idv(ids.begin(), ids.end());
  for (int64_t i = 0; i < t; ++i) {
    std::copy_n(td->value.begin() + idv[i] * d, d, od->value.begin() + i * d);
  }
  if (out.requires_grad()) {
    tape.record([td, od, idv, d] {
      for (size_t i = 0; i < idv.size(); ++i) {
        double* dst = td->grad.data() + static_cast<int64_t>(idv[i]) * d;
        const double* src = od->grad.data() + static_cast<int64_t>(i) * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

namespace {

void validate_step(double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");
  }
}

double central_difference(const std::function<double()>& eval, double* slot,
                          double step) {
  const double saved = *slot;
  *slot = saved + step;
  const double up = eval();
  *slot = saved - step;
  const double down = eval();
  *slot = saved;
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw std::runtime_error("grad_check: non-finite value during probing");
  }
  return (up - down) / (2.0 * step);
}

}  // namespace

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step) {
  validate_step(step);
  if (!x.requires_grad()) {
    throw std::invalid_argument("grad_check: input does not require grad");
  }
  Tensor probe = x;
  auto eval = [&] {
    Tape tape;
    return f(tape, probe).item();
  };

  Tensor analytic;
  {
    Tape tape;
    Tensor loss = f(tape, probe);
    probe.zero_grad();
    tape.backward(loss);
    analytic = Tensor::from_vector(
        std::vector<double>(probe.grad().begin(), probe.grad().end()),
        probe.rows(), probe.cols());
  }

  auto pd = impl(probe);
  double worst = 0.0;
  for (size_t i = 0; i < pd->value.size(); ++i) {
    const double numeric = central_difference(eval, &pd->value[i], step);
    const double a = analytic.values()[i];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check_many(const std::function<Tensor(Tape&)>& f,
                       std::span<Tensor> inputs, double step) {
  validate_step(step);
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) {
      throw std::invalid_argument("grad_check_many: input does not require grad");
    }
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).item();
  };

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f(tape);
    for (Tensor& t : inputs) t.zero_grad();
    tape.backward(loss);
    for (Tensor& t : inputs) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    }
  }

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto pd = impl(inputs[k]);
    for (size_t i = 0; i < pd->value.size(); ++i) {
      const double numeric = central_difference(eval, &pd->value[i], step);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace syncap
