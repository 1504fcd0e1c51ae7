#pragma once

#include <Eigen/Core>

namespace panet::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;

template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
MatMap<T> as_matrix(T* data, Eigen::Index rows, Eigen::Index cols) {
  return MatMap<T>(data, rows, cols);
}

template <typename T>
ConstMatMap<T> as_matrix(const T* data, Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap<T>(data, rows, cols);
}

}  // namespace panet::detail
