#pragma once

#include <vector>

#include <Eigen/Dense>

namespace simxfer {

// Greedy sparse nonnegative reconstruction of a target vector over a
// dictionary of unit atoms, with a nonnegative least-squares refit of the
// active set after every selection.
struct SparseCoeffs {
    std::vector<int> support;  // atom indices in selection order
    std::vector<double> gamma; // strictly positive, same length as support
    double residual_norm = 0;
    bool converged = true; // false if any refit hit its iteration cap
};

struct PcmpConfig {
    // Sparsity penalty. Acts as an additive improvement threshold only when
    // below 1: a step must shrink the residual norm by at least lambda to be
    // worth an extra nonzero. At the conventional value 100 it never fires
    // for unit targets, so max_support and min_rel_improvement govern.
    double lambda = 100.0;
    int max_support = 20;
    double min_rel_improvement = 1e-4;
    int max_refit_iters = 500;
};

// dictionary: E x m, one unit atom per column.
SparseCoeffs pcmp_solve(const Eigen::VectorXd& target, const Eigen::MatrixXd& dictionary,
                        const PcmpConfig& cfg = {});

// Projected-gradient nonnegative least squares over the given atoms
// (E x n, one atom per column). Step size 1/||A||_2^2; stops at projected
// gradient norm <= grad_tol or after max_iters (converged flag cleared).
Eigen::VectorXd nnls_refit(const Eigen::VectorXd& target, const Eigen::MatrixXd& active_atoms,
                           int max_iters = 500, double grad_tol = 1e-10,
                           bool* converged = nullptr);

} // namespace simxfer
