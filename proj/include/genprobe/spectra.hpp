#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "genprobe/error.hpp"

namespace genprobe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class DType { F32, F64 };

constexpr double machine_epsilon(DType dtype) noexcept {
  return dtype == DType::F32 ? static_cast<double>(std::numeric_limits<float>::epsilon())
                             : std::numeric_limits<double>::epsilon();
}

constexpr std::size_t element_size(DType dtype) noexcept { return dtype == DType::F32 ? 4 : 8; }

// Named, shaped, row-major tensor. Values are held in double regardless of the
// storage dtype; f32 values survive the round trip exactly.
class WeightTensor {
 public:
  WeightTensor() = default;

  WeightTensor(std::string name, std::vector<std::size_t> shape, std::vector<double> data,
               DType dtype = DType::F64)
      : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
    if (shape_.empty()) throw Error(ErrorCode::UnsupportedShape, name_ + ": empty shape");
    std::size_t count = 1;
    for (auto dim : shape_) {
      if (dim == 0) throw Error(ErrorCode::UnsupportedShape, name_ + ": zero-sized dimension");
      count *= dim;
    }
    if (count != data_.size()) {
      throw Error(ErrorCode::LengthMismatch, name_ + ": data length " + std::to_string(data_.size()) +
                                                 " != product of shape " + std::to_string(count));
    }
    for (double& v : data_) {
      if (dtype_ == DType::F32) v = static_cast<double>(static_cast<float>(v));
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, name_ + ": non-finite weight");
    }
  }

  static WeightTensor from_matrix(std::string name, const Matrix& m, DType dtype = DType::F64) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return WeightTensor(std::move(name), {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                        std::move(data), dtype);
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept { return data_; }
  DType dtype() const noexcept { return dtype_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;

 private:
  std::string name_;
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  DType dtype_ = DType::F64;
};

// Descending singular values of one matrix. `values` may be shorter than
// min(rows, cols) (e.g. after truncation); missing trailing values are zero.
class SingularSpectrum {
 public:
  SingularSpectrum() = default;

  SingularSpectrum(std::vector<double> values, std::size_t rows, std::size_t cols,
                   double epsilon = std::numeric_limits<double>::epsilon())
      : values_(std::move(values)), rows_(rows), cols_(cols), epsilon_(epsilon) {
    if (rows_ == 0 || cols_ == 0) throw Error(ErrorCode::UnsupportedShape, "spectrum of empty matrix");
    if (values_.size() > std::min(rows_, cols_)) {
      throw Error(ErrorCode::LengthMismatch, "more singular values than min(rows, cols)");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite singular value");
      if (v < 0.0) throw Error(ErrorCode::InvalidArgument, "negative singular value");
    }
    if (!std::is_sorted(values_.begin(), values_.end(), std::greater<>())) {
      throw Error(ErrorCode::InvalidArgument, "singular values not descending");
    }
    const double top = values_.empty() ? 0.0 : values_.front();
    zero_tol_ = epsilon_ * static_cast<double>(std::max(rows_, cols_)) * top;
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double zero_tol() const noexcept { return zero_tol_; }
  double epsilon() const noexcept { return epsilon_; }
  double max() const noexcept { return values_.empty() ? 0.0 : values_.front(); }

  // Values strictly above zero_tol, still descending.
  std::span<const double> significant() const noexcept {
    auto end = std::find_if(values_.begin(), values_.end(), [&](double v) { return v <= zero_tol_; });
    return {values_.data(), static_cast<std::size_t>(end - values_.begin())};
  }

  SingularSpectrum scaled(double c) const {
    std::vector<double> v(values_);
    const double a = std::abs(c);
    for (auto& x : v) x *= a;
    return SingularSpectrum(std::move(v), rows_, cols_, epsilon_);
  }

 private:
  std::vector<double> values_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  double epsilon_ = std::numeric_limits<double>::epsilon();
  double zero_tol_ = 0.0;
};

// Matrices a weight tensor is analysed through. A 2-D tensor is its own single
// unfolding. A 4-D tensor (c_out, c_in, k_h, k_w) yields the mode-out matrix
// (c_out x c_in*k_h*k_w) and the mode-in matrix (c_in x c_out*k_h*k_w); in both
// the grouped axes keep their row-major order.
inline std::vector<Matrix> unfold(const WeightTensor& t) {
  const auto& shape = t.shape();
  const auto data = t.data();
  if (shape.size() == 2) {
    Matrix m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::copy(data.begin(), data.end(), m.data());
    return {std::move(m)};
  }
  if (shape.size() != 4) {
    throw Error(ErrorCode::UnsupportedShape,
                t.name() + ": cannot unfold tensor of rank " + std::to_string(shape.size()));
  }
  const auto c_out = static_cast<Eigen::Index>(shape[0]);
  const auto c_in = static_cast<Eigen::Index>(shape[1]);
  const auto kernel = static_cast<Eigen::Index>(shape[2] * shape[3]);

  Matrix mode_out(c_out, c_in * kernel);
  std::copy(data.begin(), data.end(), mode_out.data());

  Matrix mode_in(c_in, c_out * kernel);
  for (Eigen::Index o = 0; o < c_out; ++o) {
    for (Eigen::Index i = 0; i < c_in; ++i) {
      for (Eigen::Index k = 0; k < kernel; ++k) {
        mode_in(i, o * kernel + k) = data[static_cast<std::size_t>((o * c_in + i) * kernel + k)];
      }
    }
  }
  return {std::move(mode_out), std::move(mode_in)};
}

// All min(m, n) singular values, descending, computed in double precision.
// `epsilon` sets the zero tolerance; pass the storage precision of the source.
template <typename Derived>
SingularSpectrum singular_values(const Eigen::MatrixBase<Derived>& a,
                                 double epsilon = std::numeric_limits<double>::epsilon()) {
  if (a.rows() == 0 || a.cols() == 0) throw Error(ErrorCode::UnsupportedShape, "empty matrix");
  if (!a.allFinite()) throw Error(ErrorCode::NonFinite, "matrix contains NaN or Inf");

  const Eigen::MatrixXd dense = a.template cast<double>();
  std::vector<double> values;
  if (std::min(dense.rows(), dense.cols()) <= 16) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    const auto& s = svd.singularValues();
    values.assign(s.data(), s.data() + s.size());
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(dense);
    const auto& s = svd.singularValues();
    values.assign(s.data(), s.data() + s.size());
  }
  for (auto& v : values) v = std::max(v, 0.0);
  std::sort(values.begin(), values.end(), std::greater<>());
  return SingularSpectrum(std::move(values), static_cast<std::size_t>(a.rows()),
                          static_cast<std::size_t>(a.cols()), epsilon);
}

inline std::size_t numerical_rank(const SingularSpectrum& s) noexcept { return s.significant().size(); }

}  // namespace genprobe
