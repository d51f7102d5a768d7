#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace kernest {

struct NnlsOptions {
    std::size_t max_iterations = 100000;
    // Relative tolerance on the scaled dual vector A^T (b - A x) / ||A^T b||_inf.
    double kkt_tol = 1e-8;
    // Columns keep entering while their scaled dual exceeds min(kkt_tol,
    // entry_tol); the active set thus runs close to exact termination and
    // kkt_tol only decides success.
    double entry_tol = 1e-15;
};

struct NnlsResult {
    Eigen::VectorXd x;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    bool converged = false;
    // Columns at zero whose multiplier is (numerically) zero: the solution
    // is not pinned down along them.
    std::vector<std::size_t> zero_multiplier;
};

// min ||A x - b||^2 s.t. x >= 0 by the Lawson-Hanson active-set method.
// The passive-set least-squares problems are solved on a thin QR
// factorization that is updated (not recomputed) as columns enter and leave.
NnlsResult solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                      const NnlsOptions& opts = {});

// Scaled KKT residual of a candidate x >= 0 under the convention above.
double nnls_kkt_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& x);

} // namespace kernest
