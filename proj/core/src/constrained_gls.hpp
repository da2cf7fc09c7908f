#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "rsindex/errors.hpp"

namespace rsindex::detail {

struct ConstrainedSolution {
  double mu = 0.0;
  std::vector<double> beta;  // T entries
};

// Solves GLS normal equations assembled in full coordinates
// (mu, beta_1..beta_T) after substituting beta_T = -(1/n_T) sum n_t beta_t.
inline ConstrainedSolution solve_constrained_gls(
    const Eigen::MatrixXd& normal, const Eigen::VectorXd& rhs,
    const std::vector<std::size_t>& counts) {
  const int periods = static_cast<int>(counts.size());
  const int full = periods + 1;
  Eigen::MatrixXd constraint = Eigen::MatrixXd::Zero(full, periods);
  constraint(0, 0) = 1.0;
  for (int j = 1; j < periods; ++j) {
    constraint(j, j) = 1.0;
    constraint(periods, j) = -static_cast<double>(counts[j - 1]) /
                             static_cast<double>(counts[periods - 1]);
  }
  const Eigen::MatrixXd reduced = constraint.transpose() * normal * constraint;
  const Eigen::VectorXd reduced_rhs = constraint.transpose() * rhs;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw Error(ErrorKind::kIdentifiability,
                "GLS normal matrix for (mu, beta) is singular");
  }
  const Eigen::VectorXd theta = constraint * ldlt.solve(reduced_rhs);
  ConstrainedSolution out;
  out.mu = theta(0);
  out.beta.assign(theta.data() + 1, theta.data() + full);
  return out;
}

}  // namespace rsindex::detail
