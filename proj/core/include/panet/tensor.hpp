#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panet/error.hpp"

namespace panet {

using Shape = std::vector<std::size_t>;

/// Cache-line (and AVX-512 register) aligned allocation. Eigen's vectorised
/// kernels peel a data-dependent number of leading elements on unaligned
/// input, which changes the summation order; with every buffer 64-byte
/// aligned the order depends only on shapes, keeping runs bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Dense row-major array with shape metadata. Feature maps use N x C x H x W.
///
/// Instantiated for float (training) and double (gradient checks).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  /// Zero-filled tensor. Zero-sized dimensions are representable here so that
  /// shape errors can be raised by the op that receives them; use `zeros` for
  /// validated construction.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, const std::vector<T>& data);
  /// Takes ownership of an already aligned buffer.
  static Tensor adopt(Shape shape, AlignedVector<T> data);

  /// Validated constructor: every dimension must be >= 1.
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Rank-4 accessor (n, c, h, w).
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>::adopt(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  void fill(T value) noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

template <typename T>
Tensor<T> zeros(Shape shape) {
  return Tensor<T>::zeros(std::move(shape));
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

/// Normal(0, std^2) entries from a stateless counter-based generator: entry i
/// depends only on (seed, stream, i).
template <typename T>
Tensor<T> randn_seeded(Shape shape, double std, std::uint64_t seed, std::uint64_t stream = 0);

/// Uniform [lo, hi) entries, same determinism contract as randn_seeded.
template <typename T>
Tensor<T> rand_uniform_seeded(Shape shape, double lo, double hi, std::uint64_t seed,
                              std::uint64_t stream = 0);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
/// grad_in[i] = grad_out[i] where x[i] > 0, else 0 (subgradient 0 at the kink).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, T slope, const Tensor<T>& grad_out);

/// Channel concatenation of two N x C x H x W tensors, `a` first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Inverse of concat_channels: splits after `channels_a` channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t channels_a);

/// a += b
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);
/// a += alpha * b
template <typename T>
void axpy_inplace(Tensor<T>& a, T alpha, const Tensor<T>& b);
template <typename T>
Tensor<T> scaled(const Tensor<T>& t, T alpha);

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
bool all_finite(const Tensor<T>& t) noexcept;
/// Throws NonFiniteError naming `where` and the first offending flat index.
template <typename T>
void ensure_finite(const Tensor<T>& t, const char* where);

/// Stack equally-shaped tensors along a new leading axis of size 1 each
/// (i.e. concatenate along axis 0).
template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& items);
/// Slice sample `n` of an N x ... tensor, keeping a leading axis of 1.
template <typename T>
Tensor<T> batch_item(const Tensor<T>& t, std::size_t n);

}  // namespace panet
