#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace sgg {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  static Mat eye(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
  static Mat row_vector(const std::vector<double>& x) {
    Mat m(1, static_cast<int>(x.size()));
    m.v = x;
    return m;
  }

  double& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return v[static_cast<size_t>(r) * cols + c];
  }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Mat matmul(const Mat& a, const Mat& b) {
  assert(a.cols == b.rows);
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      double* orow = out.row(i);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

}  // namespace sgg
