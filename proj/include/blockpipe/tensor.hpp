#ifndef BLOCKPIPE_TENSOR_HPP_
#define BLOCKPIPE_TENSOR_HPP_

#include <cstdint>
#include <vector>

namespace blockpipe {

// Dense row-major tensor of 64-bit floats. Immutable by convention once it
// leaves the function that built it; everything downstream relies on values
// being bit-stable, so all reductions here run in a fixed order (row-major,
// ascending index) and no operation is allowed to reassociate.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s);
  Tensor(std::vector<int64_t> s, std::vector<double> d);

  int64_t numel() const;
  int64_t rows() const;  // first dimension
  int64_t cols() const;  // product of remaining dimensions

  double& at(int64_t r, int64_t c);
  double at(int64_t r, int64_t c) const;

  bool same_shape(const Tensor& other) const;
  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

  // Reinterprets as [rows, cols] without touching data.
  Tensor reshaped(std::vector<int64_t> s) const;
};

// out[m,n] = a[m,k] @ b[k,n], accumulated ascending in k per output element.
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction. Rows sum to 1 within 1e-12.
Tensor softmax_rows(const Tensor& x);

// Row-wise normalization: (x - mean) / sqrt(var + eps), two-pass moments.
Tensor layer_norm(const Tensor& x, double eps);

// Elementwise helpers, all shape-checked.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// out[r] = concatenation of a's and b's rows, a first.
Tensor vcat_rows(const Tensor& a, const Tensor& b);

// Copies the half-open row range [begin, end).
Tensor slice_rows(const Tensor& x, int64_t begin, int64_t end);

// Gathers rows by index, in the order given.
Tensor take_rows(const Tensor& x, const std::vector<int64_t>& idx);

}  // namespace blockpipe

#endif  // BLOCKPIPE_TENSOR_HPP_
