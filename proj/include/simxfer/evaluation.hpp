#pragma once

#include <span>
#include <string>
#include <vector>

#include "simxfer/model_store.hpp"

namespace simxfer {

struct EvalConfig {
    double iou_threshold = 0.5;
    double nms_iou = 0.3;
};

double iou(const Box& a, const Box& b);

// Greedy per-image, per-category suppression: keep a detection iff its IoU
// with every higher-scoring kept detection stays <= nms_iou. Ties in score
// keep the earlier input index.
std::vector<Detection> nms(std::span<const Detection> dets, double nms_iou);

struct ApResult {
    double ap = 0;
    bool defined = true; // false when there are neither detections nor gt
    int gt_count = 0;
    int det_count = 0;
};

// All-points interpolated average precision for one category. Detections
// are sorted by score descending (stable); each matches the highest-IoU
// unmatched gt of its image at or above the threshold.
ApResult average_precision(std::span<const Detection> dets, const GroundTruthSet& gts,
                           int category, double iou_threshold);

enum class Subset { Strong, Weak, All };

struct CategoryAp {
    int category = 0;
    ApResult result;
};

// Unweighted mean over the subset; undefined categories are skipped.
double mean_ap(const std::vector<CategoryAp>& per_category, const CategoryRegistry& registry,
               Subset subset);

struct EvalReport {
    std::vector<CategoryAp> per_category; // ascending category id
    double map_strong = 0;
    double map_weak = 0;
    double map_all = 0;
};

// Per-category AP over already-suppressed detections, plus the three means.
EvalReport evaluate(std::span<const Detection> dets, const GroundTruthSet& gts,
                    const CategoryRegistry& registry, const EvalConfig& cfg);

void save_report_csv(const EvalReport& report, const CategoryRegistry& registry,
                     const std::string& path);

} // namespace simxfer
