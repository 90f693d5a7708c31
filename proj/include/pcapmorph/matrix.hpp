#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcapmorph/error.hpp"

namespace pcapmorph {

// Dense row-major matrix of doubles.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(size_t i) const {
    return {data.data() + i * cols, cols};
  }
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }

  void push_row(std::span<const double> r) {
    if (cols == 0) cols = r.size();
    if (r.size() != cols)
      throw Error(ErrorCode::State, "row width mismatch in matrix append");
    data.insert(data.end(), r.begin(), r.end());
    ++rows;
  }
};

}  // namespace pcapmorph
