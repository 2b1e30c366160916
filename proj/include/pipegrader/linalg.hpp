#pragma once

#include <Eigen/Dense>

namespace pipegrader {

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

/// Cyclic Jacobi rotation for a symmetric matrix. Eigenvector signs are
/// fixed so the entry of largest magnitude in each vector is positive.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric,
                            int max_sweeps = 100, double tolerance = 1e-14);

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b);

}  // namespace pipegrader
