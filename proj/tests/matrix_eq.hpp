#pragma once

#include <Eigen/Dense>

template <typename A, typename B>
bool matrix_eq(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}
