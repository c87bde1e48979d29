#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simxfer/model_store.hpp"
#include "simxfer/pcmp.hpp"

namespace simxfer {

enum class TruncMode { Average, Weighted };

struct TruncationScheme {
    TruncMode mode = TruncMode::Weighted;
    int k = 0; // neighbor count, 1..m
};

struct MixtureConfig {
    double alpha = 0.6; // weight of the visual term, in [0,1]
    bool renormalize = true;
};

// Smoothing for inverse-distance weights.
inline constexpr double kInvDistEps = 1e-6;

// Row j is the mean classifier score mass that weak category j's validation
// images place on each strong category, renormalized over the strong set.
SimilarityMatrix visual_similarity(const ScoreTable& scores, const CategoryRegistry& registry);

// Unit-normalized sum of the resolved term vectors. Per-term fallback:
// exact token, lowercase, Capitalized, then the sum of in-vocabulary words
// of a multiword phrase. extra_labels are appended to the term list.
Eigen::VectorXd build_category_embedding(const std::vector<std::string>& synset_terms,
                                         const EmbeddingTable& tokens,
                                         const std::vector<std::string>& extra_labels = {});

// Per-category embeddings for the whole registry, keyed by category name.
EmbeddingTable build_registry_embeddings(
    const CategoryRegistry& registry, const EmbeddingTable& tokens,
    const std::map<std::string, std::vector<std::string>>& extra_labels = {});

// s(j,i) = 1/(d(j,i)+eps) over strong categories, row-normalized.
SimilarityMatrix semantic_similarity_knn(const EmbeddingTable& per_category,
                                         const CategoryRegistry& registry);

// Row j holds the PCMP coefficients reconstructing the weak embedding from
// the strong dictionary, row-normalized; unreconstructable rows are flagged.
SimilarityMatrix semantic_similarity_sparse(const EmbeddingTable& per_category,
                                            const CategoryRegistry& registry,
                                            const PcmpConfig& cfg = {});

// Neighbors by Euclidean distance between classifier weight rows; Average
// gives each of the k nearest weight 1/k, Weighted uses 1/(d+eps) renormalized.
SimilarityMatrix lsda_baseline_similarity(const HeadMatrix& classifier,
                                          const CategoryRegistry& registry,
                                          const TruncationScheme& scheme);

// Keep the k largest entries per row (ties to the lower column id).
SimilarityMatrix truncate(const SimilarityMatrix& sim, const TruncationScheme& scheme);

// Entries where either input is zero are dropped; survivors are combined as
// alpha*visual + (1-alpha)*semantic and renormalized. Rows whose admissible
// set is empty fall back to the visual row.
SimilarityMatrix mixture(const SimilarityMatrix& visual, const SimilarityMatrix& semantic,
                         const MixtureConfig& cfg);

} // namespace simxfer
