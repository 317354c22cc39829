#include "msrpb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msrpb/errors.hpp"

namespace msrpb {

std::size_t element_count(const std::vector<std::size_t> &shape) {
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const std::vector<std::size_t> &shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (element_count(shape) != size())
    throw ContractError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor &Tensor::operator+=(const Tensor &o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] += o.data_[i];
  return *this;
}

Tensor &Tensor::operator-=(const Tensor &o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i)
    data_[i] -= o.data_[i];
  return *this;
}

Tensor &Tensor::operator*=(double s) {
  for (auto &v : data_)
    v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor &b) { return a += b; }
Tensor operator-(Tensor a, const Tensor &b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double dot(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += a[i] * b[i];
  return acc;
}

double max_abs(const Tensor &a) {
  double m = 0.0;
  for (double v : a.values())
    m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius(const Tensor &a) { return std::sqrt(dot(a, a)); }

bool all_finite(const Tensor &a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *what) {
  if (!a.same_shape(b))
    throw ContractError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
}

void round_to_float(Tensor &a) {
  for (double &v : a.values())
    v = static_cast<double>(static_cast<float>(v));
}

} // namespace msrpb
