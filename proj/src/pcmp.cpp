#include "simxfer/pcmp.hpp"

#include <cmath>

#include "simxfer/errors.hpp"
#include "simxfer/log.hpp"

namespace simxfer {

Eigen::VectorXd nnls_refit(const Eigen::VectorXd& target, const Eigen::MatrixXd& active_atoms,
                           int max_iters, double grad_tol, bool* converged) {
    if (active_atoms.cols() == 0) throw DimensionError("nnls_refit: empty active set");
    if (active_atoms.rows() != target.size())
        throw DimensionError("nnls_refit: atom dimension does not match target");

    const long n = active_atoms.cols();
    // step 1/sigma_max^2 keeps projected gradient descent contractive
    const double smax = active_atoms.jacobiSvd().singularValues()(0);
    const double step = smax > 0 ? 1.0 / (smax * smax) : 1.0;

    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(n);
    bool ok = false;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd grad = active_atoms.transpose() * (active_atoms * gamma - target);
        // KKT residual: free coordinates need zero gradient, clamped ones
        // only a nonnegative gradient
        double pg2 = 0;
        for (long i = 0; i < n; ++i) {
            double g = grad[i];
            if (gamma[i] > 0) pg2 += g * g;
            else if (g < 0) pg2 += g * g;
        }
        if (std::sqrt(pg2) <= grad_tol) {
            ok = true;
            break;
        }
        gamma = (gamma - step * grad).cwiseMax(0.0);
    }
    if (converged) *converged = ok;
    return gamma;
}

SparseCoeffs pcmp_solve(const Eigen::VectorXd& target, const Eigen::MatrixXd& dictionary,
                        const PcmpConfig& cfg) {
    if (dictionary.cols() == 0) throw DimensionError("pcmp_solve: empty dictionary");
    if (dictionary.rows() != target.size())
        throw DimensionError("pcmp_solve: dictionary dimension does not match target");

    SparseCoeffs out;
    Eigen::VectorXd residual = target;
    double cur_norm = residual.norm();
    out.residual_norm = cur_norm;

    std::vector<int> support;
    Eigen::VectorXd gamma;

    std::vector<char> in_support(size_t(dictionary.cols()), 0);
    // selection/refit can also prune, so bound total iterations separately
    const int iter_cap = std::max(64, 8 * cfg.max_support);

    for (int iter = 0; iter < iter_cap; ++iter) {
        if (int(support.size()) >= cfg.max_support) break;

        // most positively correlated unused atom; ties go to the lower id
        int best = -1;
        double best_ip = 0.0;
        for (long i = 0; i < dictionary.cols(); ++i) {
            if (in_support[size_t(i)]) continue;
            double ip = dictionary.col(i).dot(residual);
            if (ip > best_ip) {
                best_ip = ip;
                best = int(i);
            }
        }
        if (best < 0 || best_ip <= 0.0) break;

        std::vector<int> trial_support = support;
        trial_support.push_back(best);

        Eigen::MatrixXd active(dictionary.rows(), long(trial_support.size()));
        for (size_t k = 0; k < trial_support.size(); ++k)
            active.col(long(k)) = dictionary.col(trial_support[k]);

        bool refit_ok = true;
        Eigen::VectorXd trial_gamma =
            nnls_refit(target, active, cfg.max_refit_iters, 1e-10, &refit_ok);
        if (!refit_ok) out.converged = false;

        const double new_norm = (target - active * trial_gamma).norm();
        const double improvement = cur_norm - new_norm;
        if (cur_norm > 0 && improvement / cur_norm < cfg.min_rel_improvement) break;
        if (cfg.lambda < 1.0 && improvement < cfg.lambda) break;

        // accept; drop any atom whose coefficient the refit clamped to zero
        support.clear();
        std::vector<double> kept;
        for (size_t k = 0; k < trial_support.size(); ++k) {
            if (trial_gamma[long(k)] > 0) {
                support.push_back(trial_support[k]);
                kept.push_back(trial_gamma[long(k)]);
            }
        }
        std::fill(in_support.begin(), in_support.end(), 0);
        for (int idx : support) in_support[size_t(idx)] = 1;
        gamma = Eigen::Map<Eigen::VectorXd>(kept.data(), long(kept.size()));

        residual = target;
        for (size_t k = 0; k < support.size(); ++k)
            residual -= gamma[long(k)] * dictionary.col(support[k]);
        cur_norm = new_norm;
        if (cur_norm <= 1e-14) break;
    }

    out.support = support;
    out.gamma.assign(gamma.data(), gamma.data() + gamma.size());
    out.residual_norm = cur_norm;
    if (!out.converged)
        log_warn("pcmp_solve: a refit hit max_refit_iters before reaching tolerance");
    return out;
}

} // namespace simxfer
