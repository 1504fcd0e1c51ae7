#include "panet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "panet/random.hpp"

namespace panet {

std::size_t shape_numel(const Shape& shape) noexcept {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& data) : Tensor(adopt(std::move(shape), {data.begin(), data.end()})) {}

template <typename T>
Tensor<T> Tensor<T>::adopt(Shape shape, AlignedVector<T> data) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeMismatch("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                        shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  if (shape.empty()) throw InvalidShape("zeros: shape must be non-empty");
  for (auto d : shape) {
    if (d == 0) throw InvalidShape("zeros: dimension must be >= 1 in " + shape_str(shape));
  }
  return Tensor(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t = zeros(std::move(shape));
  t.fill(value);
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeMismatch("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshape(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeMismatch("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
void Tensor<T>::fill(T value) noexcept {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> randn_seeded(Shape shape, double std, std::uint64_t seed, std::uint64_t stream) {
  if (!(std > 0.0)) throw InvalidParam("randn_seeded: std must be > 0");
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(std * rng.normal(i));
  return t;
}

template <typename T>
Tensor<T> rand_uniform_seeded(Shape shape, double lo, double hi, std::uint64_t seed,
                              std::uint64_t stream) {
  if (!(hi > lo)) throw InvalidParam("rand_uniform_seeded: need hi > lo");
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  const CounterRng rng(seed, stream);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(i, lo, hi));
  return t;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (!x.same_shape(grad_out)) throw ShapeMismatch("relu_backward: gradient shape mismatch");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
  return out;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, T slope, const Tensor<T>& grad_out) {
  if (!x.same_shape(grad_out)) throw ShapeMismatch("leaky_relu_backward: gradient shape mismatch");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : slope * grad_out[i];
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4) throw ShapeMismatch("concat_channels: expected rank-4 tensors");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] || sa[1] == 0 || sb[1] == 0) {
    throw ShapeMismatch("concat_channels: cannot concatenate " + shape_str(sa) + " and " +
                        shape_str(sb));
  }
  const std::size_t n = sa[0], plane = sa[2] * sa[3];
  const std::size_t block_a = sa[1] * plane, block_b = sb[1] * plane;
  Tensor<T> out({n, sa[1] + sb[1], sa[2], sa[3]});
  for (std::size_t i = 0; i < n; ++i) {
    T* dst = out.ptr() + i * (block_a + block_b);
    std::copy_n(a.ptr() + i * block_a, block_a, dst);
    std::copy_n(b.ptr() + i * block_b, block_b, dst + block_a);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t channels_a) {
  if (t.rank() != 4 || channels_a == 0 || channels_a >= t.dim(1)) {
    throw ShapeMismatch("split_channels: invalid split of " + shape_str(t.shape()));
  }
  const auto& s = t.shape();
  const std::size_t n = s[0], plane = s[2] * s[3];
  const std::size_t channels_b = s[1] - channels_a;
  Tensor<T> a({n, channels_a, s[2], s[3]});
  Tensor<T> b({n, channels_b, s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i) {
    const T* src = t.ptr() + i * s[1] * plane;
    std::copy_n(src, channels_a * plane, a.ptr() + i * channels_a * plane);
    std::copy_n(src + channels_a * plane, channels_b * plane, b.ptr() + i * channels_b * plane);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch("add_inplace: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

template <typename T>
void axpy_inplace(Tensor<T>& a, T alpha, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch("axpy_inplace: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += alpha * b[i];
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& t, T alpha) {
  Tensor<T> out = t;
  for (auto& v : out.data()) v *= alpha;
  return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& t) noexcept {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* where) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NonFiniteError(std::string(where) + ": non-finite value at flat index " +
                           std::to_string(i) + " of " + shape_str(t.shape()));
    }
  }
}

template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw ShapeMismatch("concat_batch: no items");
  Shape shape = items.front().shape();
  std::size_t total = 0;
  for (const auto& it : items) {
    if (it.rank() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), it.shape().begin() + 1)) {
      throw ShapeMismatch("concat_batch: inconsistent item shapes");
    }
    total += it.dim(0);
  }
  shape[0] = total;
  AlignedVector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto& it : items) data.insert(data.end(), it.data().begin(), it.data().end());
  return Tensor<T>::adopt(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> batch_item(const Tensor<T>& t, std::size_t n) {
  if (t.rank() == 0 || n >= t.dim(0)) throw ShapeMismatch("batch_item: index out of range");
  Shape shape = t.shape();
  shape[0] = 1;
  const std::size_t block = shape_numel(shape);
  AlignedVector<T> data(t.ptr() + n * block, t.ptr() + (n + 1) * block);
  return Tensor<T>::adopt(std::move(shape), std::move(data));
}

#define PANET_INSTANTIATE(T)                                                                     \
  template class Tensor<T>;                                                                      \
  template Tensor<T> randn_seeded<T>(Shape, double, std::uint64_t, std::uint64_t);               \
  template Tensor<T> rand_uniform_seeded<T>(Shape, double, double, std::uint64_t, std::uint64_t); \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                         \
  template Tensor<T> leaky_relu_backward<T>(const Tensor<T>&, T, const Tensor<T>&);              \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, std::size_t);     \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);                                    \
  template void axpy_inplace<T>(Tensor<T>&, T, const Tensor<T>&);                                \
  template Tensor<T> scaled<T>(const Tensor<T>&, T);                                             \
  template double max_abs_diff<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template bool all_finite<T>(const Tensor<T>&) noexcept;                                        \
  template void ensure_finite<T>(const Tensor<T>&, const char*);                                 \
  template Tensor<T> concat_batch<T>(const std::vector<Tensor<T>>&);                             \
  template Tensor<T> batch_item<T>(const Tensor<T>&, std::size_t);

PANET_INSTANTIATE(float)
PANET_INSTANTIATE(double)

#undef PANET_INSTANTIATE

}  // namespace panet
