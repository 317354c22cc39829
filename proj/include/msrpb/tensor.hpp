#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace msrpb {

/// Dense row-major n-d array of doubles.
///
/// Feature maps use the (channels, frames, height, width) layout throughout;
/// a single-channel video is therefore frame-major, which makes its
/// (height*width) x frames matrix view a plain column-major reinterpretation.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor like(const Tensor &other, double fill = 0.0) { return Tensor(other.shape_, fill); }

  const std::vector<std::size_t> &shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double *data() noexcept { return data_.data(); }
  const double *data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double> &storage() noexcept { return data_; }

  double &operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // 4-d accessors for the (c, t, h, w) layout.
  double &at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    return data_[((c * shape_[1] + t) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return data_[((c * shape_[1] + t) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape with equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double v);
  Tensor &operator+=(const Tensor &o);
  Tensor &operator-=(const Tensor &o);
  Tensor &operator*=(double s);

  bool same_shape(const Tensor &o) const noexcept { return shape_ == o.shape_; }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor &b);
Tensor operator-(Tensor a, const Tensor &b);
Tensor operator*(Tensor a, double s);

double dot(const Tensor &a, const Tensor &b);
double max_abs(const Tensor &a);
double max_abs_diff(const Tensor &a, const Tensor &b);
double frobenius(const Tensor &a);
bool all_finite(const Tensor &a);

/// Rounds every element to the nearest float32 (the on-disk precision).
void round_to_float(Tensor &a);

std::string shape_string(const std::vector<std::size_t> &shape);
std::size_t element_count(const std::vector<std::size_t> &shape);

/// Throws ContractError when the shapes differ.
void require_same_shape(const Tensor &a, const Tensor &b, const char *what);

} // namespace msrpb
