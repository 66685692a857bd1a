#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "osdp/errors.hpp"

namespace osdp {

// The split-MatMul transform: partition the shared dimension of X [m x d]
// and W [d x h] into s contiguous blocks, compute the partial products
// serially (slice 0 -> s-1, fixed for determinism), and sum them. Only one
// slice of W needs to be materialized at a time, which is where the
// peak-memory reduction comes from; the result matches the direct product
// up to accumulation order.
inline Eigen::MatrixXd split_matmul(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                                    std::int64_t s) {
  const Eigen::Index d = X.cols();
  if (W.rows() != d) {
    throw ValidationError("split_matmul: inner dimensions do not conform (" +
                          std::to_string(X.cols()) + " vs " + std::to_string(W.rows()) + ")");
  }
  if (s < 1 || s > d) {
    throw ValidationError("split_matmul: slice granularity " + std::to_string(s) +
                          " outside [1, " + std::to_string(d) + "]");
  }
  if (s == 1) {
    return X * W;
  }

  // Equal parts; the last slice absorbs the remainder.
  const Eigen::Index base = d / s;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(X.rows(), W.cols());
  for (Eigen::Index i = 0; i < s; ++i) {
    const Eigen::Index begin = i * base;
    const Eigen::Index len = (i == s - 1) ? d - begin : base;
    acc += X.middleCols(begin, len) * W.middleRows(begin, len);
  }
  return acc;
}

}  // namespace osdp
