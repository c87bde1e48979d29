#pragma once

// Serial reference implementations of the parallel kernels, plus the
// independent oracles the test suites check against. Nothing here is used
// by the production pipeline; tests and the kernel benchmark link it to
// cross-check the OpenMP paths.

#include <map>
#include <span>
#include <vector>

#include "simxfer/adaptation.hpp"
#include "simxfer/evaluation.hpp"
#include "simxfer/model_store.hpp"
#include "simxfer/pcmp.hpp"
#include "simxfer/similarity.hpp"

namespace simxfer::ref {

// --- serial twins of the OpenMP kernels -----------------------------------

HeadMatrix adapt_head(const HeadMatrix& classifier, const HeadMatrix& delta,
                      const SimilarityMatrix& sim);

std::vector<Detection> score_regions(const HeadMatrix& head, const CategoryRegistry& registry,
                                     std::span<const ProposalRecord> proposals);

SimilarityMatrix semantic_similarity_sparse(const EmbeddingTable& per_category,
                                            const CategoryRegistry& registry,
                                            const PcmpConfig& cfg);

EvalReport evaluate(std::span<const Detection> dets, const GroundTruthSet& gts,
                    const CategoryRegistry& registry, const EvalConfig& cfg);

// --- oracles ----------------------------------------------------------------

// Eq.-style direct computation: classifier row plus the plain average of the
// k nearest deltas named by the similarity row's support.
Eigen::RowVectorXd average_of_deltas(const Eigen::RowVectorXd& classifier_row,
                                     std::span<const Eigen::RowVectorXd> neighbor_deltas);

// Best nonnegative least-squares fit over every support of size <= max_support,
// found by exhaustive enumeration.
struct ExhaustiveNnls {
    std::vector<int> support;
    Eigen::VectorXd gamma;
    double residual_norm = 0;
};
ExhaustiveNnls exhaustive_best_support(const Eigen::VectorXd& target,
                                       const Eigen::MatrixXd& dictionary, int max_support);

// NNLS over a fixed atom set by enumerating all free/clamped patterns.
Eigen::VectorXd nnls_enumerate(const Eigen::VectorXd& target,
                               const Eigen::MatrixXd& active_atoms);

// Ridge normal equations solved by hand-rolled Gaussian elimination with
// partial pivoting; independent of Eigen's factorizations.
Eigen::VectorXd ridge_gauss(const Eigen::MatrixXd& phi, const Eigen::VectorXd& t,
                            double lambda0);

// Average precision by sweeping every distinct score threshold and
// re-matching from scratch at each cut.
double average_precision_sweep(std::span<const Detection> dets, const GroundTruthSet& gts,
                               int category, double iou_threshold);

} // namespace simxfer::ref
