#include <cmath>

#include <doctest.h>

#include "blockpipe/errors.hpp"
#include "blockpipe/rng.hpp"
#include "blockpipe/tensor.hpp"

using namespace blockpipe;

namespace {

// Independent oracle: plain triple loop, no shared code with matmul beyond
// the accumulation order contract (ascending k).
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) {
        acc += a.data[static_cast<size_t>(i * k + t)] * b.data[static_cast<size_t>(t * n + j)];
      }
      out.data[static_cast<size_t>(i * n + j)] = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {3, 4, 5, 6});
  CHECK(matmul(eye, b).bitwise_equal(b));
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 1}, {3, 4});
  Tensor c = matmul(a, b);
  CHECK(c.shape == std::vector<int64_t>{1, 1});
  CHECK(c.data[0] == 11.0);
}

TEST_CASE("matmul equals triple-loop oracle bitwise") {
  RandomSource rs(42);
  Tensor a = rs.normal_tensor({5, 7});
  Tensor b = rs.normal_tensor({7, 3});
  CHECK(matmul(a, b).bitwise_equal(matmul_oracle(a, b)));
}

TEST_CASE("matmul shape mismatch") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("softmax symmetry and overflow safety") {
  Tensor z({1, 2}, {0, 0});
  Tensor s = softmax_rows(z);
  CHECK(s.data[0] == 0.5);
  CHECK(s.data[1] == 0.5);

  Tensor big({1, 2}, {1000, 1000});
  Tensor sb = softmax_rows(big);
  CHECK(sb.data[0] == 0.5);
  CHECK(sb.data[1] == 0.5);
  CHECK(sb.all_finite());
}

TEST_CASE("softmax closed form at [0, ln 3]") {
  Tensor x({1, 2}, {0.0, std::log(3.0)});
  Tensor s = softmax_rows(x);
  CHECK(s.data[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.data[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
  RandomSource rs(7);
  Tensor x = rs.normal_tensor({6, 9});
  Tensor s = softmax_rows(x);
  for (int64_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (int64_t j = 0; j < 9; ++j) {
      CHECK(s.at(i, j) >= 0.0);
      sum += s.at(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm zero-variance row") {
  Tensor x({1, 4}, {5, 5, 5, 5});
  Tensor y = layer_norm(x, 1e-5);
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("layer_norm already normalized row") {
  Tensor x({1, 2}, {1, -1});
  Tensor y = layer_norm(x, 1e-5);
  CHECK(y.data[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(y.data[1] == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm against two-pass oracle") {
  RandomSource rs(3);
  Tensor x = rs.normal_tensor({4, 11});
  const double eps = 1e-5;
  Tensor y = layer_norm(x, eps);
  for (int64_t i = 0; i < 4; ++i) {
    double mean = 0.0;
    for (int64_t j = 0; j < 11; ++j) mean += x.at(i, j);
    mean /= 11.0;
    double var = 0.0;
    for (int64_t j = 0; j < 11; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= 11.0;
    for (int64_t j = 0; j < 11; ++j) {
      const double want = (x.at(i, j) - mean) / std::sqrt(var + eps);
      CHECK(std::abs(y.at(i, j) - want) <= 1e-12);
    }
    // Row moments of the output: mean 0, variance 1 (up to eps regularization).
    double om = 0.0;
    for (int64_t j = 0; j < 11; ++j) om += y.at(i, j);
    CHECK(std::abs(om / 11.0) <= 1e-10);
    double ov = 0.0;
    for (int64_t j = 0; j < 11; ++j) ov += y.at(i, j) * y.at(i, j);
    CHECK(ov / 11.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("row helpers") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({1, 3}, {7, 8, 9});
  Tensor c = vcat_rows(a, b);
  CHECK(c.shape == std::vector<int64_t>{3, 3});
  CHECK(c.at(2, 0) == 7.0);
  Tensor s = slice_rows(c, 1, 3);
  CHECK(s.at(0, 2) == 6.0);
  Tensor t = take_rows(c, {2, 0});
  CHECK(t.at(0, 1) == 8.0);
  CHECK(t.at(1, 0) == 1.0);
  CHECK_THROWS_AS(slice_rows(c, 0, 4), DimensionError);
}

TEST_CASE("operations are pure: repeated calls bit-identical") {
  RandomSource rs(11);
  Tensor a = rs.normal_tensor({3, 5});
  Tensor b = rs.normal_tensor({5, 2});
  CHECK(matmul(a, b).bitwise_equal(matmul(a, b)));
  CHECK(softmax_rows(a).bitwise_equal(softmax_rows(a)));
  CHECK(layer_norm(a, 1e-5).bitwise_equal(layer_norm(a, 1e-5)));
}

TEST_CASE("finite outputs for finite inputs") {
  RandomSource rs(5);
  Tensor a = rs.normal_tensor({8, 8});
  CHECK(matmul(a, a).all_finite());
  CHECK(softmax_rows(scale(a, 500.0)).all_finite());
  CHECK(layer_norm(a, 1e-5).all_finite());
}
