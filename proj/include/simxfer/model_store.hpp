#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "simxfer/errors.hpp"

namespace simxfer {

// ---------------------------------------------------------------------------
// Categories
// ---------------------------------------------------------------------------

enum class Split { Strong, Weak };

struct CategoryEntry {
    int id = 0;
    std::string name;
    std::vector<std::string> synset_terms;
    Split split = Split::Strong;
};

// Ordered category list. ids are 0..K-1 and contiguous; the strong and weak
// subsets partition the registry and are both nonempty.
class CategoryRegistry {
public:
    CategoryRegistry() = default;
    static CategoryRegistry from_entries(std::vector<CategoryEntry> entries);

    const std::vector<CategoryEntry>& entries() const { return entries_; }
    int size() const { return int(entries_.size()); }
    int strong_count() const { return int(strong_.size()); }
    int weak_count() const { return int(weak_.size()); }
    const std::vector<int>& strong_ids() const { return strong_; }
    const std::vector<int>& weak_ids() const { return weak_; }
    const CategoryEntry& at(int id) const;
    const CategoryEntry* find(const std::string& name) const;
    bool is_strong(int id) const { return at(id).split == Split::Strong; }
    std::vector<std::string> strong_names() const;
    std::vector<std::string> weak_names() const;

private:
    std::vector<CategoryEntry> entries_;
    std::vector<int> strong_;
    std::vector<int> weak_;
    std::unordered_map<std::string, int> by_name_;
};

CategoryRegistry load_registry(const std::string& path);
void save_registry(const CategoryRegistry& reg, const std::string& path);

// ---------------------------------------------------------------------------
// Labeled CSV matrices
// ---------------------------------------------------------------------------

// On-disk matrix form: cell (0,0) is a kind tag, first row holds column
// labels, first column holds row labels. Values are written with 17
// significant digits so doubles round-trip bit-exactly.
struct LabeledMatrix {
    std::string kind;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd values;
};

LabeledMatrix load_matrix(const std::string& path);
void save_matrix(const LabeledMatrix& m, const std::string& path);

// ---------------------------------------------------------------------------
// Linear heads
// ---------------------------------------------------------------------------

enum class HeadKind { Classifier, Detector, Delta };

// Per-category weight rows, D feature weights plus one bias slot per row.
// A detector head may carry one extra background row, kept separately.
struct HeadMatrix {
    HeadKind kind = HeadKind::Classifier;
    std::vector<std::string> rows; // category names
    Eigen::MatrixXd values;        // rows.size() x (D+1)
    std::optional<Eigen::RowVectorXd> background;

    int dim() const { return int(values.cols()); }
    int find_row(const std::string& name) const;

    LabeledMatrix to_labeled(const std::string& kind_tag) const;
    static HeadMatrix from_labeled(const LabeledMatrix& m);
    void validate() const;
};

HeadMatrix load_head(const std::string& path);
void save_head(const HeadMatrix& head, const std::string& path,
               const std::string& kind_tag);

// ---------------------------------------------------------------------------
// Similarity matrices
// ---------------------------------------------------------------------------

// Nonnegative weak x strong weights. Every row either sums to 1 (within
// 1e-9) or is all zero and flagged as empty.
struct SimilarityMatrix {
    std::vector<std::string> rows; // weak category names
    std::vector<std::string> cols; // strong category names
    Eigen::MatrixXd values;
    std::vector<std::uint8_t> empty_row;

    int find_row(const std::string& name) const;
    int find_col(const std::string& name) const;
    void validate() const;

    LabeledMatrix to_labeled() const;
    static SimilarityMatrix from_labeled(const LabeledMatrix& m);
};

SimilarityMatrix load_similarity(const std::string& path);
void save_similarity(const SimilarityMatrix& sim, const std::string& path);

// ---------------------------------------------------------------------------
// Classification score tables
// ---------------------------------------------------------------------------

struct ScoreRecord {
    std::string image_id;
    std::string true_category; // weak category name
    Eigen::VectorXd scores;    // length K, sums to 1
};

struct ScoreTable {
    std::vector<std::string> columns; // category names in registry order
    std::vector<ScoreRecord> records;
};

ScoreTable load_scores(const std::string& path);
void save_scores(const ScoreTable& table, const std::string& path);

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

// Token or category-name vectors. Insertion order is kept so saving is
// deterministic; duplicate tokens overwrite in place (last wins).
struct EmbeddingTable {
    int dim = 0;
    std::vector<std::pair<std::string, Eigen::VectorXd>> items;
    std::unordered_map<std::string, int> index;

    void put(const std::string& token, Eigen::VectorXd vec);
    const Eigen::VectorXd* find(const std::string& token) const;
    bool empty() const { return items.empty(); }
};

// expected_dim 0 means: take the dim from a word2vec-style "count dim"
// header line if present, else from the first data line.
EmbeddingTable load_embeddings(const std::string& path, int expected_dim = 0);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

// ---------------------------------------------------------------------------
// Boxes, proposals, detections, ground truth
// ---------------------------------------------------------------------------

// Center format throughout; corner form exists only at the I/O boundary.
struct Box {
    double x = 0; // center abscissa, pixels
    double y = 0; // center ordinate
    double w = 0;
    double h = 0;
};

Box box_from_corners(double xmin, double ymin, double xmax, double ymax);
std::array<double, 4> box_to_corners(const Box& b); // xmin,ymin,xmax,ymax
void validate_box(const Box& b);                    // DomainError unless w,h > 0

struct ProposalRecord {
    std::string image_id;
    Box box;
    Eigen::VectorXd feature;
    std::optional<Eigen::VectorXd> class_scores; // length K+1 when present
};

std::vector<ProposalRecord> load_proposals(const std::string& path);
void save_proposals(std::span<const ProposalRecord> proposals,
                    const std::string& path);

struct Detection {
    std::string image_id;
    int category = 0;
    double score = 0;
    Box box;
};

std::vector<Detection> load_detections(const std::string& path);
void save_detections(std::span<const Detection> dets, const std::string& path);

struct GtInstance {
    int category = 0;
    Box box;
};

struct GroundTruthSet {
    std::vector<std::pair<std::string, std::vector<GtInstance>>> images;
    std::unordered_map<std::string, int> index;

    void add(const std::string& image_id, GtInstance inst);
    const std::vector<GtInstance>* find(const std::string& image_id) const;
    int total(int category) const;
};

GroundTruthSet load_groundtruth(const std::string& path);
void save_groundtruth(const GroundTruthSet& gts, const std::string& path);

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

// 17 significant digits: enough to reproduce any finite double exactly.
std::string fmt_g17(double v);

} // namespace simxfer
