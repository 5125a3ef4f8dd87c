#include "han/tensor.hpp"

#include <iomanip>
#include <ostream>

#include "han/error.hpp"

namespace han {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data, bool requires_grad)
    : storage_(std::make_shared<TensorStorage<Real>>()) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  if (element_count(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + to_string(shape));
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::matrix(std::initializer_list<std::initializer_list<Real>> rows,
                                  bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::vector(std::initializer_list<Real> values, bool requires_grad) {
  return Tensor({values.size()}, std::vector<Real>(values), requires_grad);
}

template <typename Real>
Real Tensor<Real>::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs a matrix, got " + to_string(shape()));
  return storage_->data.at(row * dim(1) + col);
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ShapeError("item() needs a single element, got " + to_string(shape()));
  return storage_->data[0];
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool value) {
  if (!storage_->leaf) throw UsageError("requires_grad can only be changed on leaf tensors");
  storage_->requires_grad = value;
}

template <typename Real>
std::span<Real> Tensor<Real>::grad_accumulator() const {
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), Real(0));
  return storage_->grad;
}

template <typename Real>
void Tensor<Real>::clear_grad() {
  storage_->grad.clear();
  storage_->grad.shrink_to_fit();
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return Tensor(storage_->shape, storage_->data, storage_->requires_grad);
}

namespace {
template <typename Real>
thread_local Tape<Real>* g_active_tape = nullptr;
}

template <typename Real>
Tape<Real>* Tape<Real>::active() {
  return g_active_tape<Real>;
}

template <typename Real>
void Tape<Real>::record(std::string op, const Tensor<Real>& output,
                        std::function<void()> backward) {
  entries_.push_back({std::move(op), output.storage(), std::move(backward)});
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (loss.size() != 1)
    throw UsageError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw UsageError("loss does not depend on any parameter");
  Tensor<Real> seed = loss;
  seed.grad_accumulator()[0] += Real(1);
  visited_.clear();
  visited_.reserve(entries_.size());
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    visited_.push_back(it->op);
    // nothing flowed into this output, so nothing flows out of it
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

template <typename Real>
void Tape<Real>::reset() {
  for (auto& entry : entries_) {
    entry.output->grad.clear();
    entry.output->grad.shrink_to_fit();
  }
  entries_.clear();
  visited_.clear();
}

template <typename Real>
TapeScope<Real>::TapeScope(Tape<Real>& tape) : previous_(g_active_tape<Real>) {
  g_active_tape<Real> = &tape;
}

template <typename Real>
TapeScope<Real>::~TapeScope() {
  g_active_tape<Real> = previous_;
}

namespace detail {

template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs) {
  if (!Tape<Real>::active()) return false;
  for (const Tensor<Real>* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename Real>
bool should_record(std::span<const Tensor<Real>> inputs) {
  if (!Tape<Real>::active()) return false;
  for (const Tensor<Real>& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

template <typename Real>
void record(std::string op, Tensor<Real>& output, std::function<void()> backward) {
  auto storage = output.storage();
  storage->requires_grad = true;
  storage->leaf = false;
  Tape<Real>::active()->record(std::move(op), output, std::move(backward));
}

}  // namespace detail

template <typename Real>
void dump(std::ostream& os, const Tensor<Real>& t) {
  os << to_string(t.shape()) << '\n';
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(9);
  const std::size_t row = t.rank() ? t.shape().back() : 1;
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << t[i] << ((i + 1) % row == 0 ? '\n' : ' ');
  }
  os.flags(flags);
  os.precision(precision);
}

#define HAN_INSTANTIATE(Real)                                                          \
  template class Tensor<Real>;                                                         \
  template class Tape<Real>;                                                           \
  template class TapeScope<Real>;                                                      \
  template bool detail::should_record<Real>(std::initializer_list<const Tensor<Real>*>); \
  template bool detail::should_record<Real>(std::span<const Tensor<Real>>);            \
  template void detail::record<Real>(std::string, Tensor<Real>&, std::function<void()>); \
  template void dump<Real>(std::ostream&, const Tensor<Real>&);

HAN_INSTANTIATE(float)
HAN_INSTANTIATE(double)

#undef HAN_INSTANTIATE

}  // namespace han
