#pragma once

#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "simxfer/model_store.hpp"

namespace simxfer {

// Scale-invariant center offsets and log-space size ratios mapping a
// proposal box onto its ground-truth box.
struct RegressionTarget {
    double tx = 0;
    double ty = 0;
    double tw = 0;
    double th = 0;
};

// Per-category ridge regressor, one weight vector per target component,
// bias slot appended.
struct BoxRegressor {
    int category = 0;
    Eigen::VectorXd wx, wy, ww, wh; // each length F+1
    double lambda0 = 0;

    RegressionTarget predict(const Eigen::VectorXd& feature) const;
    static BoxRegressor zero(int category, int feature_dim, double lambda0);
};

RegressionTarget make_targets(const Box& p, const Box& g);
Box apply_offsets(const Box& p, const RegressionTarget& t);

struct TrainingPair {
    Eigen::VectorXd feature; // F, bias appended internally
    RegressionTarget target;
};

// Pairs each proposal with its maximum-IoU ground-truth box; the pair is
// kept when that IoU reaches iou_min and is assigned the gt's category.
std::map<int, std::vector<TrainingPair>> select_pairs(std::span<const ProposalRecord> proposals,
                                                      const GroundTruthSet& gts,
                                                      double iou_min = 0.6);

// Ridge regression via the normal equations; the bias column is regularized
// like every other weight.
BoxRegressor train_regressor(std::span<const TrainingPair> pairs, int category,
                             double lambda0 = 1000.0);

std::map<int, BoxRegressor> train_regressors(
    const std::map<int, std::vector<TrainingPair>>& pairs_by_category, double lambda0 = 1000.0);

// w_j = sum_i s(j,i) * w_i for each of the four weight vectors.
std::map<int, BoxRegressor> transfer_regressors(const std::map<int, BoxRegressor>& strong_regs,
                                                const SimilarityMatrix& sim,
                                                const CategoryRegistry& registry);

// Replaces every detection's box with the regressed prediction; scores are
// untouched. features[i] belongs to dets[i].
std::vector<Detection> regress_detections(std::span<const Detection> dets,
                                          std::span<const Eigen::VectorXd> features,
                                          const std::map<int, BoxRegressor>& regs);

// Looks up each detection's proposal feature by image id and exact box.
std::vector<Eigen::VectorXd> match_features(std::span<const Detection> dets,
                                            std::span<const ProposalRecord> proposals);

std::map<int, BoxRegressor> load_regressors(const std::string& path,
                                            const CategoryRegistry& registry);
void save_regressors(const std::map<int, BoxRegressor>& regs, const CategoryRegistry& registry,
                     const std::string& path);

} // namespace simxfer
