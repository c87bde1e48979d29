#include "simxfer/adaptation.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace simxfer {

void AdaptationReport::save_json(const std::string& path) const {
    nlohmann::json arr = nlohmann::json::array();
    for (const AdaptationEntry& e : entries) {
        nlohmann::json neigh = nlohmann::json::array();
        for (const NeighborUse& n : e.neighbors)
            neigh.push_back({{"name", n.name}, {"weight", n.weight}});
        arr.push_back({{"category", e.category},
                       {"adapted", e.adapted},
                       {"neighbors", neigh},
                       {"bias_norm", e.bias_norm}});
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << arr.dump(2) << "\n";
}

HeadMatrix compute_delta(const HeadMatrix& classifier, const HeadMatrix& detector,
                         const CategoryRegistry& registry) {
    if (classifier.dim() != detector.dim())
        throw DimensionError("classifier and detector dimensions disagree");

    HeadMatrix delta;
    delta.kind = HeadKind::Delta;
    const std::vector<int>& strong = registry.strong_ids();
    delta.values.resize(long(strong.size()), classifier.dim());
    for (size_t i = 0; i < strong.size(); ++i) {
        const std::string& name = registry.at(strong[i]).name;
        int d = detector.find_row(name);
        if (d < 0) throw CoverageError("detector head misses strong category '" + name + "'");
        int c = classifier.find_row(name);
        if (c < 0) throw CoverageError("classifier head misses strong category '" + name + "'");
        delta.rows.push_back(name);
        delta.values.row(long(i)) = detector.values.row(d) - classifier.values.row(c);
    }
    return delta;
}

HeadMatrix adapt_head(const HeadMatrix& classifier, const HeadMatrix& delta,
                      const SimilarityMatrix& sim, AdaptationReport* report) {
    if (classifier.dim() != delta.dim())
        throw DimensionError("classifier and delta dimensions disagree");
    const long dim = classifier.dim();
    const long nrows = long(sim.rows.size());
    const long ncols = long(sim.cols.size());

    std::vector<int> weak_rows(static_cast<size_t>(nrows));
    for (long r = 0; r < nrows; ++r) {
        weak_rows[size_t(r)] = classifier.find_row(sim.rows[size_t(r)]);
        if (weak_rows[size_t(r)] < 0)
            throw IndexMismatchError("classifier head misses category '" + sim.rows[size_t(r)] +
                                     "'");
    }
    std::vector<int> delta_rows(static_cast<size_t>(ncols));
    for (long c = 0; c < ncols; ++c) {
        delta_rows[size_t(c)] = delta.find_row(sim.cols[size_t(c)]);
        if (delta_rows[size_t(c)] < 0)
            throw IndexMismatchError("delta matrix misses strong category '" +
                                     sim.cols[size_t(c)] + "'");
    }

    HeadMatrix out;
    out.kind = HeadKind::Detector;
    out.rows = sim.rows;
    out.values.resize(nrows, dim);
    if (report) report->entries.resize(size_t(nrows));

#pragma omp parallel for schedule(static)
    for (long r = 0; r < nrows; ++r) {
        Eigen::RowVectorXd row = classifier.values.row(weak_rows[size_t(r)]);
        AdaptationEntry entry;
        entry.category = sim.rows[size_t(r)];
        if (sim.empty_row[size_t(r)]) {
            entry.adapted = false;
        } else {
            // skip zero weights so one-hot rows transfer the delta bit-exactly
            Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(dim);
            for (long c = 0; c < ncols; ++c) {
                double s = sim.values(r, c);
                if (s == 0) continue;
                bias += s * delta.values.row(delta_rows[size_t(c)]);
                entry.neighbors.push_back({sim.cols[size_t(c)], s});
            }
            entry.bias_norm = bias.norm();
            row += bias;
        }
        out.values.row(r) = row;
        if (report) report->entries[size_t(r)] = std::move(entry);
    }
    return out;
}

std::vector<Detection> score_regions(const HeadMatrix& head, const CategoryRegistry& registry,
                                     std::span<const ProposalRecord> proposals) {
    if (!head.background)
        throw InvariantError("score_regions needs a head with a background row");
    if (int(head.rows.size()) != registry.size())
        throw CoverageError("head covers " + std::to_string(head.rows.size()) +
                            " categories, registry has " + std::to_string(registry.size()));
    std::vector<int> category_ids(head.rows.size());
    for (size_t r = 0; r < head.rows.size(); ++r) {
        const CategoryEntry* e = registry.find(head.rows[r]);
        if (!e) throw CoverageError("head category '" + head.rows[r] + "' not in registry");
        category_ids[r] = e->id;
    }

    const long k = long(head.rows.size());
    const long dim = head.dim();
    for (const ProposalRecord& prop : proposals)
        if (prop.feature.size() != dim - 1)
            throw DimensionError("proposal feature dim " + std::to_string(prop.feature.size()) +
                                 " does not match head dim " + std::to_string(dim - 1));
    std::vector<Detection> out(proposals.size() * size_t(k));

#pragma omp parallel for schedule(static)
    for (long p = 0; p < long(proposals.size()); ++p) {
        const ProposalRecord& prop = proposals[size_t(p)];
        Eigen::VectorXd x(dim);
        x.head(dim - 1) = prop.feature;
        x[dim - 1] = 1.0; // bias slot

        Eigen::VectorXd logits(k + 1);
        logits.head(k) = head.values * x;
        logits[k] = head.background->dot(x);

        const double m = logits.maxCoeff();
        Eigen::VectorXd e = (logits.array() - m).exp();
        const double z = e.sum();
        const double e_bg = e[k];
        for (long c = 0; c < k; ++c) {
            Detection& d = out[size_t(p) * size_t(k) + size_t(c)];
            d.image_id = prop.image_id;
            d.category = category_ids[size_t(c)];
            d.score = (e[c] - e_bg) / z;
            d.box = prop.box;
        }
    }
    return out;
}

} // namespace simxfer
