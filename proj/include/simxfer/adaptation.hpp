#pragma once

#include <span>
#include <string>
#include <vector>

#include "simxfer/model_store.hpp"

namespace simxfer {

struct NeighborUse {
    std::string name;
    double weight = 0;
};

struct AdaptationEntry {
    std::string category;
    bool adapted = true; // false when the similarity row was flagged empty
    std::vector<NeighborUse> neighbors;
    double bias_norm = 0; // L2 norm of the applied bias vector
};

struct AdaptationReport {
    std::vector<AdaptationEntry> entries;
    void save_json(const std::string& path) const;
};

// Detector-minus-classifier weight rows over the strong set. The detector's
// background row is excluded.
HeadMatrix compute_delta(const HeadMatrix& classifier, const HeadMatrix& detector,
                         const CategoryRegistry& registry);

// Weak detector rows w_j = w_j^c + sum_i s(j,i) * delta_i. Rows flagged
// empty copy the classifier row unchanged. Emits weak rows only.
HeadMatrix adapt_head(const HeadMatrix& classifier, const HeadMatrix& delta,
                      const SimilarityMatrix& sim, AdaptationReport* report = nullptr);

// Softmax over the K category rows plus the background row; the detection
// score of category c is softmax_c - softmax_background. Emits one
// candidate per (proposal, category), proposal-major.
std::vector<Detection> score_regions(const HeadMatrix& head, const CategoryRegistry& registry,
                                     std::span<const ProposalRecord> proposals);

} // namespace simxfer
