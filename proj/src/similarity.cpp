#include "simxfer/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "simxfer/log.hpp"

namespace simxfer {

namespace {

SimilarityMatrix make_empty(const CategoryRegistry& registry) {
    SimilarityMatrix sim;
    sim.rows = registry.weak_names();
    sim.cols = registry.strong_names();
    sim.values = Eigen::MatrixXd::Zero(long(sim.rows.size()), long(sim.cols.size()));
    sim.empty_row.assign(sim.rows.size(), 0);
    return sim;
}

// Normalize one row to unit sum, or flag it empty when there is no mass.
// The sum runs in ascending column order so results do not depend on the
// storage layout or vectorization width.
void finish_row(SimilarityMatrix& sim, long r) {
    double sum = 0;
    for (long c = 0; c < sim.values.cols(); ++c) sum += sim.values(r, c);
    if (sum > 0) {
        for (long c = 0; c < sim.values.cols(); ++c) sim.values(r, c) /= sum;
    } else {
        sim.values.row(r).setZero();
        sim.empty_row[size_t(r)] = 1;
    }
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

std::string capitalized(const std::string& s) {
    if (s.empty()) return s;
    std::string out = lowercase(s);
    out[0] = char(std::toupper((unsigned char)out[0]));
    return out;
}

// Resolve one synset term against the token table; null when nothing matches.
bool resolve_term(const std::string& term, const EmbeddingTable& tokens, Eigen::VectorXd& out) {
    for (const std::string& cand : {term, lowercase(term), capitalized(term)}) {
        if (const Eigen::VectorXd* v = tokens.find(cand)) {
            out = *v;
            return true;
        }
    }
    // multiword phrase: sum whatever words are in vocabulary
    std::string spaced = term;
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    std::istringstream ss(spaced);
    std::string word;
    Eigen::VectorXd sum;
    bool any = false;
    int words = 0;
    while (ss >> word) ++words;
    if (words < 2) return false;
    ss.clear();
    ss.str(spaced);
    while (ss >> word) {
        const Eigen::VectorXd* v = tokens.find(word);
        if (!v) v = tokens.find(lowercase(word));
        if (!v) v = tokens.find(capitalized(word));
        if (!v) continue;
        if (!any) sum = *v;
        else sum += *v;
        any = true;
    }
    if (any) out = std::move(sum);
    return any;
}

} // namespace

SimilarityMatrix visual_similarity(const ScoreTable& scores, const CategoryRegistry& registry) {
    if (int(scores.columns.size()) != registry.size())
        throw IndexMismatchError("score table has " + std::to_string(scores.columns.size()) +
                                 " category columns, registry has " +
                                 std::to_string(registry.size()));
    for (int id = 0; id < registry.size(); ++id)
        if (scores.columns[size_t(id)] != registry.at(id).name)
            throw IndexMismatchError("score column '" + scores.columns[size_t(id)] +
                                     "' does not match registry category '" +
                                     registry.at(id).name + "'");

    // bucket record indices per weak category, keeping file order
    std::vector<std::vector<int>> buckets(size_t(registry.size()));
    for (int r = 0; r < int(scores.records.size()); ++r) {
        const CategoryEntry* cat = registry.find(scores.records[size_t(r)].true_category);
        if (!cat)
            throw MissingCategoryError("score record category '" +
                                       scores.records[size_t(r)].true_category +
                                       "' is not in the registry");
        buckets[size_t(cat->id)].push_back(r);
    }

    SimilarityMatrix sim = make_empty(registry);
    const std::vector<int>& weak = registry.weak_ids();
    const std::vector<int>& strong = registry.strong_ids();
    for (size_t r = 0; r < weak.size(); ++r) {
        if (buckets[size_t(weak[r])].empty())
            throw MissingCategoryError("weak category '" + registry.at(weak[r]).name +
                                       "' has no validation records");
    }

#pragma omp parallel for schedule(static)
    for (long r = 0; r < long(weak.size()); ++r) {
        const std::vector<int>& recs = buckets[size_t(weak[size_t(r)])];
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(long(strong.size()));
        for (int idx : recs) {
            const Eigen::VectorXd& s = scores.records[size_t(idx)].scores;
            for (size_t c = 0; c < strong.size(); ++c) acc[long(c)] += s[strong[c]];
        }
        acc /= double(recs.size());
        sim.values.row(r) = acc.transpose();
        finish_row(sim, r);
    }
    return sim;
}

Eigen::VectorXd build_category_embedding(const std::vector<std::string>& synset_terms,
                                         const EmbeddingTable& tokens,
                                         const std::vector<std::string>& extra_labels) {
    std::vector<std::string> terms = synset_terms;
    terms.insert(terms.end(), extra_labels.begin(), extra_labels.end());

    Eigen::VectorXd sum;
    bool any = false;
    for (const std::string& term : terms) {
        Eigen::VectorXd v;
        if (!resolve_term(term, tokens, v)) continue;
        if (!any) sum = std::move(v);
        else sum += v;
        any = true;
    }
    if (!any) {
        std::string joined;
        for (const auto& t : terms) joined += (joined.empty() ? "" : ", ") + t;
        throw UnresolvableError("no synset term resolves to an embedding: " + joined);
    }
    double n = sum.norm();
    if (n == 0) throw UnresolvableError("synset terms sum to the zero vector");
    return sum / n;
}

EmbeddingTable build_registry_embeddings(
    const CategoryRegistry& registry, const EmbeddingTable& tokens,
    const std::map<std::string, std::vector<std::string>>& extra_labels) {
    EmbeddingTable out;
    out.dim = tokens.dim;
    for (const CategoryEntry& e : registry.entries()) {
        auto it = extra_labels.find(e.name);
        const std::vector<std::string> extra =
            it == extra_labels.end() ? std::vector<std::string>{} : it->second;
        out.put(e.name, build_category_embedding(e.synset_terms, tokens, extra));
    }
    return out;
}

namespace {

// Gather unit embeddings in registry order; throws when one is missing or
// not unit length.
Eigen::MatrixXd category_vectors(const EmbeddingTable& per_category,
                                 const CategoryRegistry& registry, const std::vector<int>& ids) {
    Eigen::MatrixXd out;
    for (size_t k = 0; k < ids.size(); ++k) {
        const std::string& name = registry.at(ids[k]).name;
        const Eigen::VectorXd* v = per_category.find(name);
        if (!v) throw MissingCategoryError("no embedding for category '" + name + "'");
        if (std::abs(v->norm() - 1.0) > 1e-6)
            throw InvariantError("embedding for '" + name + "' is not unit length");
        if (out.size() == 0) out.resize(v->size(), long(ids.size()));
        if (v->size() != out.rows())
            throw DimensionError("embedding dimensions disagree for '" + name + "'");
        out.col(long(k)) = *v;
    }
    return out;
}

} // namespace

SimilarityMatrix semantic_similarity_knn(const EmbeddingTable& per_category,
                                         const CategoryRegistry& registry) {
    const std::vector<int>& weak = registry.weak_ids();
    const std::vector<int>& strong = registry.strong_ids();
    Eigen::MatrixXd wv = category_vectors(per_category, registry, weak);
    Eigen::MatrixXd sv = category_vectors(per_category, registry, strong);
    if (wv.rows() != sv.rows()) throw DimensionError("weak/strong embedding dims disagree");

    SimilarityMatrix sim = make_empty(registry);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < long(weak.size()); ++r) {
        for (long c = 0; c < long(strong.size()); ++c) {
            double d = (wv.col(r) - sv.col(c)).norm();
            sim.values(r, c) = 1.0 / (d + kInvDistEps);
        }
        finish_row(sim, r);
    }
    return sim;
}

SimilarityMatrix semantic_similarity_sparse(const EmbeddingTable& per_category,
                                            const CategoryRegistry& registry,
                                            const PcmpConfig& cfg) {
    const std::vector<int>& weak = registry.weak_ids();
    const std::vector<int>& strong = registry.strong_ids();
    Eigen::MatrixXd wv = category_vectors(per_category, registry, weak);
    Eigen::MatrixXd dict = category_vectors(per_category, registry, strong);
    if (wv.rows() != dict.rows()) throw DimensionError("weak/strong embedding dims disagree");
    if (cfg.max_support > int(strong.size()))
        throw ConfigError("max_support exceeds the strong category count");

    SimilarityMatrix sim = make_empty(registry);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < long(weak.size()); ++r) {
        SparseCoeffs coeffs = pcmp_solve(wv.col(r), dict, cfg);
        for (size_t k = 0; k < coeffs.support.size(); ++k)
            sim.values(r, coeffs.support[k]) = coeffs.gamma[k];
        finish_row(sim, r);
    }
    return sim;
}

SimilarityMatrix lsda_baseline_similarity(const HeadMatrix& classifier,
                                          const CategoryRegistry& registry,
                                          const TruncationScheme& scheme) {
    const std::vector<int>& weak = registry.weak_ids();
    const std::vector<int>& strong = registry.strong_ids();
    if (scheme.k < 1 || scheme.k > int(strong.size()))
        throw ConfigError("neighbor count k must be in 1..m");

    std::vector<int> weak_rows(weak.size()), strong_rows(strong.size());
    for (size_t i = 0; i < weak.size(); ++i) {
        weak_rows[i] = classifier.find_row(registry.at(weak[i]).name);
        if (weak_rows[i] < 0)
            throw CoverageError("classifier head misses category '" +
                                registry.at(weak[i]).name + "'");
    }
    for (size_t i = 0; i < strong.size(); ++i) {
        strong_rows[i] = classifier.find_row(registry.at(strong[i]).name);
        if (strong_rows[i] < 0)
            throw CoverageError("classifier head misses category '" +
                                registry.at(strong[i]).name + "'");
    }

    SimilarityMatrix sim = make_empty(registry);
#pragma omp parallel for schedule(static)
    for (long r = 0; r < long(weak.size()); ++r) {
        std::vector<double> dist(strong.size());
        for (size_t c = 0; c < strong.size(); ++c)
            dist[c] = (classifier.values.row(weak_rows[size_t(r)]) -
                       classifier.values.row(strong_rows[c]))
                          .norm();
        std::vector<int> order(strong.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return dist[size_t(a)] < dist[size_t(b)]; });
        for (int k = 0; k < scheme.k; ++k) {
            int c = order[size_t(k)];
            sim.values(r, c) = scheme.mode == TruncMode::Average
                                   ? 1.0 / double(scheme.k)
                                   : 1.0 / (dist[size_t(c)] + kInvDistEps);
        }
        if (scheme.mode == TruncMode::Weighted) finish_row(sim, r);
    }
    return sim;
}

SimilarityMatrix truncate(const SimilarityMatrix& sim, const TruncationScheme& scheme) {
    if (scheme.k < 1 || scheme.k > int(sim.cols.size()))
        throw ConfigError("neighbor count k must be in 1..m");
    SimilarityMatrix out = sim;
    for (long r = 0; r < out.values.rows(); ++r) {
        if (out.empty_row[size_t(r)]) continue;
        std::vector<int> order(sim.cols.size());
        std::iota(order.begin(), order.end(), 0);
        // descending value, lower column id wins ties
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sim.values(r, a) != sim.values(r, b)) return sim.values(r, a) > sim.values(r, b);
            return a < b;
        });
        out.values.row(r).setZero();
        for (int k = 0; k < scheme.k; ++k) {
            int c = order[size_t(k)];
            out.values(r, c) =
                scheme.mode == TruncMode::Average ? 1.0 / double(scheme.k) : sim.values(r, c);
        }
        if (scheme.mode == TruncMode::Weighted) finish_row(out, r);
    }
    return out;
}

SimilarityMatrix mixture(const SimilarityMatrix& visual, const SimilarityMatrix& semantic,
                         const MixtureConfig& cfg) {
    if (cfg.alpha < 0 || cfg.alpha > 1) throw ConfigError("alpha must be in [0,1]");
    if (visual.rows != semantic.rows || visual.cols != semantic.cols)
        throw IndexMismatchError("mixture inputs index different categories");

    SimilarityMatrix out = visual;
    out.empty_row = visual.empty_row;
    for (long r = 0; r < out.values.rows(); ++r) {
        bool any = false;
        for (long c = 0; c < out.values.cols(); ++c) {
            if (visual.values(r, c) > 0 && semantic.values(r, c) > 0) {
                out.values(r, c) =
                    cfg.alpha * visual.values(r, c) + (1.0 - cfg.alpha) * semantic.values(r, c);
                any = true;
            } else {
                out.values(r, c) = 0;
            }
        }
        if (!any) {
            log_warn("mixture: no co-occurring categories for '" + out.rows[size_t(r)] +
                     "', falling back to the visual row");
            out.values.row(r) = visual.values.row(r);
            out.empty_row[size_t(r)] = visual.empty_row[size_t(r)];
            continue;
        }
        out.empty_row[size_t(r)] = 0;
        finish_row(out, r);
    }
    return out;
}

} // namespace simxfer
