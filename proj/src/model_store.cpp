#include "simxfer/model_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "simxfer/log.hpp"

namespace simxfer {

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace((unsigned char)s[pos])) ++pos;
        if (pos != s.size()) throw ParseError("");
        return v;
    } catch (const std::exception&) {
        throw ParseError("non-numeric token '" + s + "' in " + where);
    }
}

int parse_int(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw ParseError("");
        return v;
    } catch (const std::exception&) {
        throw ParseError("non-integer token '" + s + "' in " + where);
    }
}

void check_label(const std::string& label) {
    if (label.find(',') != std::string::npos || label.find('\n') != std::string::npos)
        throw InvariantError("label '" + label + "' contains a separator character");
}

} // namespace

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CategoryRegistry
// ---------------------------------------------------------------------------

CategoryRegistry CategoryRegistry::from_entries(std::vector<CategoryEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const CategoryEntry& a, const CategoryEntry& b) { return a.id < b.id; });
    CategoryRegistry reg;
    for (int i = 0; i < int(entries.size()); ++i) {
        const CategoryEntry& e = entries[i];
        if (e.id != i)
            throw InvariantError("category ids must be 0..K-1 and unique, got id " +
                                 std::to_string(e.id) + " at position " + std::to_string(i));
        if (e.name.empty()) throw InvariantError("category name empty for id " + std::to_string(e.id));
        check_label(e.name);
        if (e.synset_terms.empty())
            throw InvariantError("category '" + e.name + "' has no synset terms");
        if (reg.by_name_.count(e.name))
            throw InvariantError("duplicate category name '" + e.name + "'");
        reg.by_name_[e.name] = i;
        if (e.split == Split::Strong) reg.strong_.push_back(i);
        else reg.weak_.push_back(i);
    }
    reg.entries_ = std::move(entries);
    if (reg.strong_.empty()) throw InvariantError("strong category set is empty");
    if (reg.weak_.empty()) throw InvariantError("weak category set is empty");
    return reg;
}

const CategoryEntry& CategoryRegistry::at(int id) const {
    if (id < 0 || id >= size()) throw InvariantError("category id out of range: " + std::to_string(id));
    return entries_[id];
}

const CategoryEntry* CategoryRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &entries_[it->second];
}

std::vector<std::string> CategoryRegistry::strong_names() const {
    std::vector<std::string> out;
    out.reserve(strong_.size());
    for (int id : strong_) out.push_back(entries_[id].name);
    return out;
}

std::vector<std::string> CategoryRegistry::weak_names() const {
    std::vector<std::string> out;
    out.reserve(weak_.size());
    for (int id : weak_) out.push_back(entries_[id].name);
    return out;
}

CategoryRegistry load_registry(const std::string& path) {
    std::ifstream in = open_in(path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("categories") || !doc["categories"].is_array())
        throw ParseError(path + ": expected top-level object with a 'categories' array");
    std::vector<CategoryEntry> entries;
    std::set<int> seen;
    for (const auto& c : doc["categories"]) {
        CategoryEntry e;
        try {
            e.id = c.at("id").get<int>();
            e.name = c.at("name").get<std::string>();
            e.synset_terms = c.at("synset").get<std::vector<std::string>>();
            std::string split = c.at("split").get<std::string>();
            if (split == "strong") e.split = Split::Strong;
            else if (split == "weak") e.split = Split::Weak;
            else throw ParseError(path + ": unknown split '" + split + "'");
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError(path + ": " + ex.what());
        }
        if (!seen.insert(e.id).second)
            throw InvariantError(path + ": duplicate category id " + std::to_string(e.id));
        entries.push_back(std::move(e));
    }
    return CategoryRegistry::from_entries(std::move(entries));
}

void save_registry(const CategoryRegistry& reg, const std::string& path) {
    nlohmann::json cats = nlohmann::json::array();
    for (const CategoryEntry& e : reg.entries()) {
        cats.push_back({{"id", e.id},
                        {"name", e.name},
                        {"synset", e.synset_terms},
                        {"split", e.split == Split::Strong ? "strong" : "weak"}});
    }
    std::ofstream out = open_out(path);
    out << nlohmann::json{{"categories", cats}}.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// LabeledMatrix
// ---------------------------------------------------------------------------

LabeledMatrix load_matrix(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.empty()) throw ParseError(path + ": empty header");

    LabeledMatrix m;
    m.kind = header[0];
    m.col_labels.assign(header.begin() + 1, header.end());
    const size_t ncols = m.col_labels.size();

    std::vector<std::vector<double>> body;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != ncols + 1)
            throw DimensionError(path + ": row '" + cells[0] + "' has " +
                                 std::to_string(cells.size() - 1) + " values, header has " +
                                 std::to_string(ncols));
        m.row_labels.push_back(cells[0]);
        std::vector<double> row(ncols);
        for (size_t j = 0; j < ncols; ++j)
            row[j] = parse_double(cells[j + 1], path);
        body.push_back(std::move(row));
    }
    m.values.resize(long(body.size()), long(ncols));
    for (size_t i = 0; i < body.size(); ++i)
        for (size_t j = 0; j < ncols; ++j) m.values(long(i), long(j)) = body[i][j];
    return m;
}

void save_matrix(const LabeledMatrix& m, const std::string& path) {
    if (size_t(m.values.rows()) != m.row_labels.size() ||
        size_t(m.values.cols()) != m.col_labels.size())
        throw DimensionError("matrix labels do not match value shape");
    check_label(m.kind);
    for (const auto& l : m.row_labels) check_label(l);
    for (const auto& l : m.col_labels) check_label(l);

    std::ofstream out = open_out(path);
    out << m.kind;
    for (const auto& l : m.col_labels) out << ',' << l;
    out << '\n';
    for (long i = 0; i < m.values.rows(); ++i) {
        out << m.row_labels[size_t(i)];
        for (long j = 0; j < m.values.cols(); ++j) out << ',' << fmt_g17(m.values(i, j));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// HeadMatrix
// ---------------------------------------------------------------------------

namespace {
const char* kBackgroundLabel = "__background__";

std::string head_kind_tag(HeadKind k) {
    switch (k) {
        case HeadKind::Classifier: return "classifier";
        case HeadKind::Detector: return "detector";
        case HeadKind::Delta: return "delta";
    }
    return "classifier";
}

HeadKind head_kind_from_tag(const std::string& tag) {
    if (tag == "classifier") return HeadKind::Classifier;
    if (tag == "delta") return HeadKind::Delta;
    // detector, detector-adapted and anything else detector-like
    return HeadKind::Detector;
}
} // namespace

int HeadMatrix::find_row(const std::string& name) const {
    for (int i = 0; i < int(rows.size()); ++i)
        if (rows[i] == name) return i;
    return -1;
}

void HeadMatrix::validate() const {
    if (int(rows.size()) != values.rows())
        throw DimensionError("head row labels do not match value shape");
    if (!values.allFinite())
        throw InvariantError("head matrix contains non-finite values");
    if (background && background->size() != values.cols())
        throw DimensionError("background row dimension mismatch");
    if (background && !background->allFinite())
        throw InvariantError("background row contains non-finite values");
}

LabeledMatrix HeadMatrix::to_labeled(const std::string& kind_tag) const {
    LabeledMatrix m;
    m.kind = kind_tag.empty() ? head_kind_tag(kind) : kind_tag;
    m.row_labels = rows;
    const int d = dim();
    for (int j = 0; j + 1 < d; ++j) m.col_labels.push_back("f" + std::to_string(j));
    m.col_labels.push_back("bias");
    if (background) {
        m.values.resize(values.rows() + 1, d);
        m.values.topRows(values.rows()) = values;
        m.values.row(values.rows()) = *background;
        m.row_labels.push_back(kBackgroundLabel);
    } else {
        m.values = values;
    }
    return m;
}

HeadMatrix HeadMatrix::from_labeled(const LabeledMatrix& m) {
    HeadMatrix h;
    h.kind = head_kind_from_tag(m.kind);
    long bg = -1;
    for (size_t i = 0; i < m.row_labels.size(); ++i)
        if (m.row_labels[i] == kBackgroundLabel) bg = long(i);
    if (bg >= 0) {
        h.background = m.values.row(bg);
        for (long i = 0; i < m.values.rows(); ++i) {
            if (i == bg) continue;
            h.rows.push_back(m.row_labels[size_t(i)]);
        }
        h.values.resize(m.values.rows() - 1, m.values.cols());
        long r = 0;
        for (long i = 0; i < m.values.rows(); ++i) {
            if (i == bg) continue;
            h.values.row(r++) = m.values.row(i);
        }
    } else {
        h.rows = m.row_labels;
        h.values = m.values;
    }
    h.validate();
    return h;
}

HeadMatrix load_head(const std::string& path) {
    return HeadMatrix::from_labeled(load_matrix(path));
}

void save_head(const HeadMatrix& head, const std::string& path, const std::string& kind_tag) {
    save_matrix(head.to_labeled(kind_tag), path);
}

// ---------------------------------------------------------------------------
// SimilarityMatrix
// ---------------------------------------------------------------------------

int SimilarityMatrix::find_row(const std::string& name) const {
    for (int i = 0; i < int(rows.size()); ++i)
        if (rows[i] == name) return i;
    return -1;
}

int SimilarityMatrix::find_col(const std::string& name) const {
    for (int i = 0; i < int(cols.size()); ++i)
        if (cols[i] == name) return i;
    return -1;
}

void SimilarityMatrix::validate() const {
    if (int(rows.size()) != values.rows() || int(cols.size()) != values.cols())
        throw DimensionError("similarity labels do not match value shape");
    if (empty_row.size() != rows.size())
        throw DimensionError("similarity row flags do not match row count");
    for (long i = 0; i < values.rows(); ++i) {
        double sum = 0;
        for (long j = 0; j < values.cols(); ++j) {
            double v = values(i, j);
            if (!(v >= 0) || !std::isfinite(v))
                throw InvariantError("similarity value negative or non-finite at row " +
                                     rows[size_t(i)]);
            sum += v;
        }
        if (empty_row[size_t(i)]) {
            if (sum != 0)
                throw InvariantError("flagged-empty similarity row " + rows[size_t(i)] +
                                     " has nonzero mass");
        } else if (std::abs(sum - 1.0) > 1e-9) {
            throw InvariantError("similarity row " + rows[size_t(i)] + " sums to " +
                                 fmt_g17(sum));
        }
    }
}

LabeledMatrix SimilarityMatrix::to_labeled() const {
    LabeledMatrix m;
    m.kind = "similarity";
    m.row_labels = rows;
    m.col_labels = cols;
    m.values = values;
    return m;
}

SimilarityMatrix SimilarityMatrix::from_labeled(const LabeledMatrix& m) {
    SimilarityMatrix s;
    s.rows = m.row_labels;
    s.cols = m.col_labels;
    s.values = m.values;
    s.empty_row.assign(s.rows.size(), 0);
    for (long i = 0; i < s.values.rows(); ++i)
        if (s.values.row(i).sum() == 0) s.empty_row[size_t(i)] = 1;
    s.validate();
    return s;
}

SimilarityMatrix load_similarity(const std::string& path) {
    return SimilarityMatrix::from_labeled(load_matrix(path));
}

void save_similarity(const SimilarityMatrix& sim, const std::string& path) {
    save_matrix(sim.to_labeled(), path);
}

// ---------------------------------------------------------------------------
// ScoreTable
// ---------------------------------------------------------------------------

ScoreTable load_scores(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "image_id" || header[1] != "true_category")
        throw ParseError(path + ": expected header image_id,true_category,<categories...>");
    ScoreTable table;
    table.columns.assign(header.begin() + 2, header.end());
    const size_t k = table.columns.size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != k + 2)
            throw DimensionError(path + ": record '" + cells[0] + "' has wrong column count");
        ScoreRecord rec;
        rec.image_id = cells[0];
        rec.true_category = cells[1];
        rec.scores.resize(long(k));
        double sum = 0;
        for (size_t j = 0; j < k; ++j) {
            double v = parse_double(cells[j + 2], path);
            if (v < 0) throw InvariantError(path + ": negative score for " + rec.image_id);
            rec.scores[long(j)] = v;
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvariantError(path + ": scores for " + rec.image_id + " sum to " + fmt_g17(sum));
        table.records.push_back(std::move(rec));
    }
    return table;
}

void save_scores(const ScoreTable& table, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "image_id,true_category";
    for (const auto& c : table.columns) {
        check_label(c);
        out << ',' << c;
    }
    out << '\n';
    for (const ScoreRecord& rec : table.records) {
        check_label(rec.image_id);
        out << rec.image_id << ',' << rec.true_category;
        for (long j = 0; j < rec.scores.size(); ++j) out << ',' << fmt_g17(rec.scores[j]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// EmbeddingTable
// ---------------------------------------------------------------------------

void EmbeddingTable::put(const std::string& token, Eigen::VectorXd vec) {
    auto it = index.find(token);
    if (it != index.end()) {
        items[size_t(it->second)].second = std::move(vec);
        return;
    }
    index[token] = int(items.size());
    items.emplace_back(token, std::move(vec));
}

const Eigen::VectorXd* EmbeddingTable::find(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? nullptr : &items[size_t(it->second)].second;
}

EmbeddingTable load_embeddings(const std::string& path, int expected_dim) {
    std::ifstream in = open_in(path);
    EmbeddingTable table;
    table.dim = expected_dim;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        if (tokens.empty()) continue;
        // word2vec text files open with a "count dim" header line
        if (first && tokens.size() == 2) {
            bool numeric = true;
            for (const auto& t : tokens)
                for (char c : t)
                    if (!std::isdigit((unsigned char)c)) numeric = false;
            if (numeric) {
                int d = parse_int(tokens[1], path);
                if (table.dim == 0) table.dim = d;
                first = false;
                continue;
            }
        }
        first = false;
        if (table.dim == 0) table.dim = int(tokens.size()) - 1;
        if (int(tokens.size()) - 1 != table.dim)
            throw DimensionError(path + ": token '" + tokens[0] + "' has " +
                                 std::to_string(tokens.size() - 1) + " values, expected " +
                                 std::to_string(table.dim));
        if (table.dim <= 0) throw DimensionError(path + ": vector dimension must be positive");
        Eigen::VectorXd v(table.dim);
        for (int j = 0; j < table.dim; ++j) v[j] = parse_double(tokens[size_t(j) + 1], path);
        if (!v.allFinite()) throw InvariantError(path + ": non-finite vector for '" + tokens[0] + "'");
        if (table.find(tokens[0]))
            log_warn("duplicate embedding token '" + tokens[0] + "' in " + path + ", last wins");
        table.put(tokens[0], std::move(v));
    }
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out = open_out(path);
    for (const auto& [token, vec] : table.items) {
        out << token;
        for (long j = 0; j < vec.size(); ++j) out << ' ' << fmt_g17(vec[j]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

Box box_from_corners(double xmin, double ymin, double xmax, double ymax) {
    Box b{(xmin + xmax) / 2.0, (ymin + ymax) / 2.0, xmax - xmin, ymax - ymin};
    validate_box(b);
    return b;
}

std::array<double, 4> box_to_corners(const Box& b) {
    return {b.x - b.w / 2.0, b.y - b.h / 2.0, b.x + b.w / 2.0, b.y + b.h / 2.0};
}

void validate_box(const Box& b) {
    if (!(b.w > 0) || !(b.h > 0))
        throw DomainError("box width and height must be positive, got w=" + fmt_g17(b.w) +
                          " h=" + fmt_g17(b.h));
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

std::vector<ProposalRecord> load_proposals(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 6 || header[0] != "image_id")
        throw ParseError(path + ": expected header image_id,x,y,w,h,f0,...");
    const size_t fdim = header.size() - 5;
    std::vector<ProposalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DimensionError(path + ": record '" + cells[0] + "' has wrong column count");
        ProposalRecord p;
        p.image_id = cells[0];
        p.box = {parse_double(cells[1], path), parse_double(cells[2], path),
                 parse_double(cells[3], path), parse_double(cells[4], path)};
        validate_box(p.box);
        p.feature.resize(long(fdim));
        for (size_t j = 0; j < fdim; ++j) p.feature[long(j)] = parse_double(cells[j + 5], path);
        if (!p.feature.allFinite())
            throw InvariantError(path + ": non-finite feature for " + p.image_id);
        out.push_back(std::move(p));
    }
    return out;
}

void save_proposals(std::span<const ProposalRecord> proposals, const std::string& path) {
    std::ofstream out = open_out(path);
    const long fdim = proposals.empty() ? 0 : proposals.front().feature.size();
    out << "image_id,x,y,w,h";
    for (long j = 0; j < fdim; ++j) out << ",f" << j;
    out << '\n';
    for (const ProposalRecord& p : proposals) {
        check_label(p.image_id);
        if (p.feature.size() != fdim)
            throw DimensionError("proposal feature dimensions disagree");
        out << p.image_id << ',' << fmt_g17(p.box.x) << ',' << fmt_g17(p.box.y) << ','
            << fmt_g17(p.box.w) << ',' << fmt_g17(p.box.h);
        for (long j = 0; j < fdim; ++j) out << ',' << fmt_g17(p.feature[j]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    std::vector<Detection> out;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("image_id,", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 7)
            throw DimensionError(path + ": expected 7 columns, got " +
                                 std::to_string(cells.size()));
        Detection d;
        d.image_id = cells[0];
        d.category = parse_int(cells[1], path);
        d.score = parse_double(cells[2], path);
        d.box = {parse_double(cells[3], path), parse_double(cells[4], path),
                 parse_double(cells[5], path), parse_double(cells[6], path)};
        validate_box(d.box);
        out.push_back(std::move(d));
    }
    return out;
}

void save_detections(std::span<const Detection> dets, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "image_id,category_id,score,x,y,w,h\n";
    for (const Detection& d : dets) {
        check_label(d.image_id);
        out << d.image_id << ',' << d.category << ',' << fmt_g17(d.score) << ','
            << fmt_g17(d.box.x) << ',' << fmt_g17(d.box.y) << ',' << fmt_g17(d.box.w) << ','
            << fmt_g17(d.box.h) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

void GroundTruthSet::add(const std::string& image_id, GtInstance inst) {
    validate_box(inst.box);
    auto it = index.find(image_id);
    if (it == index.end()) {
        index[image_id] = int(images.size());
        images.emplace_back(image_id, std::vector<GtInstance>{std::move(inst)});
    } else {
        images[size_t(it->second)].second.push_back(std::move(inst));
    }
}

const std::vector<GtInstance>* GroundTruthSet::find(const std::string& image_id) const {
    auto it = index.find(image_id);
    return it == index.end() ? nullptr : &images[size_t(it->second)].second;
}

int GroundTruthSet::total(int category) const {
    int n = 0;
    for (const auto& [id, insts] : images)
        for (const GtInstance& g : insts)
            if (g.category == category) ++n;
    return n;
}

GroundTruthSet load_groundtruth(const std::string& path) {
    std::ifstream in = open_in(path);
    std::string line;
    GroundTruthSet out;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("image_id,", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 6)
            throw DimensionError(path + ": expected 6 columns, got " +
                                 std::to_string(cells.size()));
        GtInstance g;
        g.category = parse_int(cells[1], path);
        g.box = {parse_double(cells[2], path), parse_double(cells[3], path),
                 parse_double(cells[4], path), parse_double(cells[5], path)};
        out.add(cells[0], std::move(g));
    }
    return out;
}

void save_groundtruth(const GroundTruthSet& gts, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "image_id,category_id,x,y,w,h\n";
    for (const auto& [image_id, insts] : gts.images) {
        check_label(image_id);
        for (const GtInstance& g : insts) {
            out << image_id << ',' << g.category << ',' << fmt_g17(g.box.x) << ','
                << fmt_g17(g.box.y) << ',' << fmt_g17(g.box.w) << ',' << fmt_g17(g.box.h)
                << '\n';
        }
    }
}

} // namespace simxfer
