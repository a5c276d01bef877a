#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace syncap {

class Tensor;

namespace detail {
struct TensorData {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad, same size as value
  bool requires_grad = false;
};

// Storage handle for op implementations; not part of the public surface.
std::shared_ptr<TensorData> storage(const Tensor& t);
}  // namespace detail

// Dense row-major matrix of f64. Scalars are 1x1, vectors 1xN or Nx1.
// Values are immutable while a Tape holds references to the tensor; the
// gradient buffer is the only mutable state during a backward pass.
// Copies are shallow (shared storage).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int64_t rows, int64_t cols, bool requires_grad = false);
  static Tensor full(int64_t rows, int64_t cols, double fill,
                     bool requires_grad = false);
  static Tensor from_vector(std::vector<double> values, int64_t rows,
                            int64_t cols, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor column(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  int64_t rows() const { return data_->rows; }
  int64_t cols() const { return data_->cols; }
  int64_t size() const { return data_->rows * data_->cols; }
  std::vector<int64_t> shape() const { return {data_->rows, data_->cols}; }
  std::string shape_str() const;
  bool same_shape(const Tensor& other) const {
    return rows() == other.rows() && cols() == other.cols();
  }

  double at(int64_t r, int64_t c) const {
    return data_->value[static_cast<size_t>(r * data_->cols + c)];
  }
  double& at_mut(int64_t r, int64_t c) {
    return data_->value[static_cast<size_t>(r * data_->cols + c)];
  }
  // Scalar (1x1) accessor; throws on any other shape.
  double item() const;

  std::span<const double> values() const { return data_->value; }
  // Direct value access for initialization and optimizer updates. Must not
  // be used while a tape recorded against this tensor is still live.
  std::span<double> values_mut() { return data_->value; }

  bool requires_grad() const { return data_ && data_->requires_grad; }
  std::span<const double> grad() const { return data_->grad; }
  std::span<double> grad_mut() { return data_->grad; }
  double grad_at(int64_t r, int64_t c) const {
    return data_->grad[static_cast<size_t>(r * data_->cols + c)];
  }
  void zero_grad();

  // Hard error on any non-finite entry; `what` names the tensor in the message.
  void check_finite(const std::string& what) const;

  bool shares_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Tape;
  friend std::shared_ptr<detail::TensorData> detail::storage(const Tensor& t);
  std::shared_ptr<detail::TensorData> data_;
};

// Reverse-mode tape. Ops append their backward step in execution order, so
// the record is topologically sorted by construction and one reverse sweep
// propagates all gradients. Single-owner: one flow of control per tape;
// independent tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  size_t op_count() const { return steps_.size(); }

  // Propagates d(loss)/d(tensor) into every requires_grad tensor recorded on
  // this tape. `loss` must be scalar. Gradients accumulate additively into
  // whatever is already in the grad buffers; callers zero parameter grads
  // between steps. A tape can only be walked backward once.
  void backward(const Tensor& loss);

  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

// ---- Recorded operations ------------------------------------------------
// Each op validates shapes, computes the forward value, and registers the
// backward step on the tape when any input requires a gradient.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// a: RxC, bias: 1xC broadcast over rows.
Tensor add_row_broadcast(Tape& tape, const Tensor& a, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& a, double k);
Tensor add_const(Tape& tape, const Tensor& a, double k);
Tensor relu(Tape& tape, const Tensor& a);
Tensor square(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor slice_rows(Tape& tape, const Tensor& a, int64_t first, int64_t count);
Tensor slice_cols(Tape& tape, const Tensor& a, int64_t first, int64_t count);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);

// Row-wise softmax over positions where mask != 0. Masked positions are
// exactly 0 in the output and receive no gradient; this is the boolean
// equivalent of additive -inf masking without NaN hazards. A fully masked
// row is an error. mask must have the same shape as scores and is treated
// as a constant.
Tensor masked_softmax(Tape& tape, const Tensor& scores, const Tensor& mask);

// Per-row normalization to zero mean / unit population variance (eps under
// the root), then elementwise gain and shift (both 1xC).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& shift, double eps);

Tensor log_softmax_rows(Tape& tape, const Tensor& x);
// out[r, 0] = x[r, ids[r]]; ids must be within [0, cols).
Tensor pick_per_row(Tape& tape, const Tensor& x, std::span<const int> ids);
// out[t, :] = table[ids[t], :]; backward scatter-adds into the table rows.
Tensor embed_rows(Tape& tape, const Tensor& table, std::span<const int> ids);

// ---- Gradient checking --------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must be deterministic and return a scalar tensor; step in [1e-7, 1e-3].
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step);

// Same check across every coordinate of several inputs at once (used for
// whole-model checks where f closes over the parameters).
double grad_check_many(const std::function<Tensor(Tape&)>& f,
                       std::span<Tensor> inputs, double step);

}  // namespace syncap
