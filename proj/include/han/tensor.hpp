#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace han {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename Real>
struct TensorStorage {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool leaf = true;
};

// Dense row-major array with an optional gradient buffer. Copies alias the
// same storage; use clone() for an independent copy.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<Real> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->data.size(); }

  std::span<const Real> data() const { return storage_->data; }
  // In-place writes are reserved for parameter initialization and optimizer
  // updates, never for tensors already consumed by a recorded operation.
  std::span<Real> mutable_data() { return storage_->data; }
  Real operator[](std::size_t i) const { return storage_->data[i]; }
  Real at(std::size_t row, std::size_t col) const;
  Real item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool value);
  bool is_leaf() const { return storage_->leaf; }

  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const Real> grad() const { return storage_->grad; }
  // Gradient buffer, zero-filled on first access.
  std::span<Real> grad_accumulator() const;
  void clear_grad();

  Tensor clone() const;
  const void* id() const { return storage_.get(); }

  std::shared_ptr<TensorStorage<Real>> storage() const { return storage_; }
  explicit Tensor(std::shared_ptr<TensorStorage<Real>> storage) : storage_(std::move(storage)) {}

 private:
  std::shared_ptr<TensorStorage<Real>> storage_;
};

// Records executed operations so gradients can be propagated in reverse.
// Operations record onto the tape bound to the current thread (see
// TapeScope) when at least one input requires a gradient.
template <typename Real>
class Tape {
 public:
  struct Entry {
    std::string op;
    std::shared_ptr<TensorStorage<Real>> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::string op, const Tensor<Real>& output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  // reverse recording order. Gradients accumulate on leaves.
  void backward(const Tensor<Real>& loss);

  // Drops all entries and the gradients of every intermediate they produced.
  void reset();

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  // Operation names in the order the last backward() visited them.
  const std::vector<std::string>& last_backward_order() const { return visited_; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::string> visited_;
};

// Binds a tape to the current thread for its lifetime.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* previous_;
};

namespace detail {

template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs);

template <typename Real>
bool should_record(std::span<const Tensor<Real>> inputs);

// Marks output as a non-leaf that requires grad and pushes the rule.
template <typename Real>
void record(std::string op, Tensor<Real>& output, std::function<void()> backward);

}  // namespace detail

// Shape line, then row-major values with 9 significant digits.
template <typename Real>
void dump(std::ostream& os, const Tensor<Real>& t);

}  // namespace han
