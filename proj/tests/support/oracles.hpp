#pragma once

// Independent scalar-loop references for the loss functions, plus small
// helpers shared by the unit and acceptance tests.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "discprop/tensor.hpp"

namespace oracle {

using discprop::Matrix;

inline double ce(const Matrix& gold, const Matrix& q, double eps = 1e-12) {
  double total = 0.0;
  for (int i = 0; i < gold.rows(); ++i) {
    for (int c = 0; c < gold.cols(); ++c) {
      if (gold(i, c) != 0.0) total -= gold(i, c) * std::log(std::max(q(i, c), eps));
    }
  }
  return total;
}

inline double kl(const Matrix& p, const Matrix& q, double eps = 1e-12) {
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int c = 0; c < p.cols(); ++c) {
      if (p(i, c) > 0.0) total += p(i, c) * std::log(p(i, c) / std::max(q(i, c), eps));
    }
  }
  return total;
}

inline double cosine(const Matrix& s, int i, int k) {
  if (i == k) return 1.0;
  double dot = 0.0, ni = 0.0, nk = 0.0;
  for (int j = 0; j < s.cols(); ++j) {
    dot += s(i, j) * s(k, j);
    ni += s(i, j) * s(i, j);
    nk += s(k, j) * s(k, j);
  }
  if (ni == 0.0 || nk == 0.0) return 0.0;
  return dot / std::sqrt(ni * nk);
}

inline Matrix spatial(const Matrix& s) {
  Matrix m(s.rows(), s.rows());
  for (int i = 0; i < s.rows(); ++i) {
    for (int k = 0; k < s.rows(); ++k) m(i, k) = cosine(s, i, k);
  }
  return m;
}

// Mean over ordered off-diagonal pairs.
inline double mse(const Matrix& a, const Matrix& b) {
  const auto n = a.rows();
  if (n < 2) return 0.0;
  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      if (i == k) continue;
      total += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
      ++pairs;
    }
  }
  return total / pairs;
}

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

// Rows drawn uniformly from the simplex interior.
inline Matrix random_stochastic(std::mt19937_64& rng, int rows, int cols) {
  std::exponential_distribution<double> e(1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) sum += (m(i, j) = e(rng) + 1e-9);
    m.row(i) /= sum;
  }
  return m;
}

inline Matrix random_one_hot(std::mt19937_64& rng, int rows, int cols) {
  Matrix m = Matrix::Zero(rows, cols);
  std::uniform_int_distribution<int> c(0, cols - 1);
  for (int i = 0; i < rows; ++i) m(i, c(rng)) = 1.0;
  return m;
}

// Central differences of f at x.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x,
                               double h = 1e-4) {
  Matrix g(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = f(x);
      x(i, j) = orig - h;
      const double down = f(x);
      x(i, j) = orig;
      g(i, j) = (up - down) / (2 * h);
    }
  }
  return g;
}

// max |a - b| / max(|a|, |b|, floor) over entries.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  double worst = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      const double scale = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("discprop_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
