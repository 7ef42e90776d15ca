#include "blockpipe/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "blockpipe/errors.hpp"

namespace blockpipe {

namespace {

int64_t product(const std::vector<int64_t>& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative dimension in " + shape_str(shape));
  }
  data.assign(static_cast<size_t>(product(shape)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (product(shape) != static_cast<int64_t>(data.size())) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int64_t Tensor::rows() const { return shape.empty() ? 0 : shape[0]; }

int64_t Tensor::cols() const {
  if (shape.empty()) return 0;
  int64_t c = 1;
  for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

double& Tensor::at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }

double Tensor::at(int64_t r, int64_t c) const {
  return data[static_cast<size_t>(r * cols() + c)];
}

bool Tensor::same_shape(const Tensor& other) const { return shape == other.shape; }

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape != other.shape) return false;
  if (data.empty()) return true;
  return std::memcmp(data.data(), other.data.data(), data.size() * sizeof(double)) == 0;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<int64_t> s) const {
  if (product(s) != numel()) {
    throw DimensionError("reshape " + shape_str(shape) + " -> " + shape_str(s));
  }
  return Tensor(std::move(s), data);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2) {
    throw DimensionError("matmul expects 2-d operands, got " + shape_str(a.shape) +
                         " and " + shape_str(b.shape));
  }
  const int64_t m = a.shape[0], k = a.shape[1];
  const int64_t k2 = b.shape[0], n = b.shape[1];
  if (k != k2) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
  }
  Tensor out({m, n});
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) {
        acc += pa[i * k + t] * pb[t * n + j];
      }
      po[i * n + j] = acc;
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int64_t m = x.rows(), n = x.cols();
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    double mx = x.at(i, 0);
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, double eps) {
  const int64_t m = x.rows(), n = x.cols();
  if (n < 1) throw DimensionError("layer_norm needs at least one column");
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("sub shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Tensor vcat_rows(const Tensor& a, const Tensor& b) {
  if (a.numel() == 0) return b;
  if (b.numel() == 0) return a;
  if (a.cols() != b.cols()) {
    throw DimensionError("vcat_rows column mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
  Tensor out({a.rows() + b.rows(), a.cols()});
  std::memcpy(out.data.data(), a.data.data(), a.data.size() * sizeof(double));
  std::memcpy(out.data.data() + a.data.size(), b.data.data(),
              b.data.size() * sizeof(double));
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end) {
  if (begin < 0 || end < begin || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") out of range for " +
                         shape_str(x.shape));
  }
  const int64_t c = x.cols();
  Tensor out({end - begin, c});
  std::memcpy(out.data.data(), x.data.data() + begin * c,
              static_cast<size_t>((end - begin) * c) * sizeof(double));
  return out;
}

Tensor take_rows(const Tensor& x, const std::vector<int64_t>& idx) {
  const int64_t c = x.cols();
  Tensor out({static_cast<int64_t>(idx.size()), c});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) {
      throw DimensionError("take_rows index " + std::to_string(idx[i]) +
                           " out of range for " + shape_str(x.shape));
    }
    std::memcpy(out.data.data() + i * c, x.data.data() + idx[i] * c,
                static_cast<size_t>(c) * sizeof(double));
  }
  return out;
}

}  // namespace blockpipe
