#include "syncap/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace syncap {

namespace detail {
std::shared_ptr<TensorData> storage(const Tensor& t) { return t.data_; }
}  // namespace detail

namespace {
std::shared_ptr<detail::TensorData> make_data(int64_t rows, int64_t cols,
                                              bool requires_grad) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("tensor dimensions must be positive, got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  auto d = std::make_shared<detail::TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->value.assign(static_cast<size_t>(rows * cols), 0.0);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(d->value.size(), 0.0);
  return d;
}
}  // namespace

Tensor Tensor::zeros(int64_t rows, int64_t cols, bool requires_grad) {
  Tensor t;
  t.data_ = make_data(rows, cols, requires_grad);
  return t;
}

Tensor Tensor::full(int64_t rows, int64_t cols, double fill, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  for (double& v : t.data_->value) v = fill;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> values, int64_t rows,
                           int64_t cols, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != rows * cols) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not fill shape " + std::to_string(rows) +
                                "x" + std::to_string(cols));
  }
  Tensor t = zeros(rows, cols, requires_grad);
  t.data_->value = std::move(values);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  const int64_t r = static_cast<int64_t>(rows.size());
  if (r == 0) throw std::invalid_argument("from_rows: empty row list");
  const int64_t c = static_cast<int64_t>(rows.begin()->size());
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<int64_t>(row.size()) != c) {
      throw std::invalid_argument("from_rows: ragged rows");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return from_vector(std::move(flat), r, c, requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_vector({v}, 1, 1, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const int64_t n = static_cast<int64_t>(values.size());
  return from_vector(std::move(values), 1, n, requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
  const int64_t n = static_cast<int64_t>(values.size());
  return from_vector(std::move(values), n, 1, requires_grad);
}

std::string Tensor::shape_str() const {
  if (!defined()) return "(undefined)";
  std::ostringstream os;
  os << rows() << "x" << cols();
  return os.str();
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw std::logic_error("item() on non-scalar tensor of shape " + shape_str());
  }
  return data_->value[0];
}

void Tensor::zero_grad() {
  for (double& g : data_->grad) g = 0.0;
}

void Tensor::check_finite(const std::string& what) const {
  const auto& v = data_->value;
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::runtime_error("non-finite value in " + what + " at flat index " +
                               std::to_string(i));
    }
  }
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                loss.shape_str());
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not require grad");
  }
  if (consumed_) throw std::logic_error("backward already run on this tape");
  consumed_ = true;

  loss.data_->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace syncap
