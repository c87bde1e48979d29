#include "simxfer/reference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

namespace simxfer::ref {

HeadMatrix adapt_head(const HeadMatrix& classifier, const HeadMatrix& delta,
                      const SimilarityMatrix& sim) {
    HeadMatrix out;
    out.kind = HeadKind::Detector;
    out.rows = sim.rows;
    out.values.resize(long(sim.rows.size()), classifier.dim());
    for (size_t r = 0; r < sim.rows.size(); ++r) {
        int c = classifier.find_row(sim.rows[r]);
        if (c < 0) throw IndexMismatchError("classifier misses '" + sim.rows[r] + "'");
        Eigen::RowVectorXd row = classifier.values.row(c);
        if (!sim.empty_row[r]) {
            Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(classifier.dim());
            for (size_t i = 0; i < sim.cols.size(); ++i) {
                double s = sim.values(long(r), long(i));
                if (s == 0) continue;
                int d = delta.find_row(sim.cols[i]);
                if (d < 0) throw IndexMismatchError("delta misses '" + sim.cols[i] + "'");
                bias += s * delta.values.row(d);
            }
            row += bias;
        }
        out.values.row(long(r)) = row;
    }
    return out;
}

std::vector<Detection> score_regions(const HeadMatrix& head, const CategoryRegistry& registry,
                                     std::span<const ProposalRecord> proposals) {
    if (!head.background) throw InvariantError("reference score_regions needs a background row");
    std::vector<Detection> out;
    out.reserve(proposals.size() * head.rows.size());
    const long dim = head.dim();
    for (const ProposalRecord& prop : proposals) {
        Eigen::VectorXd x(dim);
        x.head(dim - 1) = prop.feature;
        x[dim - 1] = 1.0;
        Eigen::VectorXd logits(long(head.rows.size()) + 1);
        for (size_t r = 0; r < head.rows.size(); ++r) logits[long(r)] = head.values.row(long(r)).dot(x);
        logits[long(head.rows.size())] = head.background->dot(x);
        double m = logits.maxCoeff();
        Eigen::VectorXd e = (logits.array() - m).exp();
        double z = e.sum();
        double e_bg = e[long(head.rows.size())];
        for (size_t r = 0; r < head.rows.size(); ++r) {
            const CategoryEntry* cat = registry.find(head.rows[r]);
            if (!cat) throw CoverageError("head category '" + head.rows[r] + "' unknown");
            out.push_back({prop.image_id, cat->id, (e[long(r)] - e_bg) / z, prop.box});
        }
    }
    return out;
}

SimilarityMatrix semantic_similarity_sparse(const EmbeddingTable& per_category,
                                            const CategoryRegistry& registry,
                                            const PcmpConfig& cfg) {
    SimilarityMatrix sim;
    sim.rows = registry.weak_names();
    sim.cols = registry.strong_names();
    sim.values = Eigen::MatrixXd::Zero(long(sim.rows.size()), long(sim.cols.size()));
    sim.empty_row.assign(sim.rows.size(), 0);

    Eigen::MatrixXd dict(per_category.dim, long(sim.cols.size()));
    for (size_t c = 0; c < sim.cols.size(); ++c) {
        const Eigen::VectorXd* v = per_category.find(sim.cols[c]);
        if (!v) throw MissingCategoryError("no embedding for '" + sim.cols[c] + "'");
        dict.col(long(c)) = *v;
    }
    for (size_t r = 0; r < sim.rows.size(); ++r) {
        const Eigen::VectorXd* v = per_category.find(sim.rows[r]);
        if (!v) throw MissingCategoryError("no embedding for '" + sim.rows[r] + "'");
        SparseCoeffs coeffs = pcmp_solve(*v, dict, cfg);
        for (size_t k = 0; k < coeffs.support.size(); ++k)
            sim.values(long(r), coeffs.support[k]) = coeffs.gamma[k];
        double sum = 0;
        for (long c = 0; c < sim.values.cols(); ++c) sum += sim.values(long(r), c);
        if (sum > 0)
            for (long c = 0; c < sim.values.cols(); ++c) sim.values(long(r), c) /= sum;
        else sim.empty_row[r] = 1;
    }
    return sim;
}

EvalReport evaluate(std::span<const Detection> dets, const GroundTruthSet& gts,
                    const CategoryRegistry& registry, const EvalConfig& cfg) {
    std::vector<std::vector<Detection>> by_cat(size_t(registry.size()));
    for (const Detection& d : dets) by_cat[size_t(d.category)].push_back(d);
    EvalReport report;
    report.per_category.resize(size_t(registry.size()));
    for (int c = 0; c < registry.size(); ++c)
        report.per_category[size_t(c)] = {c, average_precision(by_cat[size_t(c)], gts, c,
                                                               cfg.iou_threshold)};
    report.map_strong = mean_ap(report.per_category, registry, Subset::Strong);
    report.map_weak = mean_ap(report.per_category, registry, Subset::Weak);
    report.map_all = mean_ap(report.per_category, registry, Subset::All);
    return report;
}

Eigen::RowVectorXd average_of_deltas(const Eigen::RowVectorXd& classifier_row,
                                     std::span<const Eigen::RowVectorXd> neighbor_deltas) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(classifier_row.size());
    for (const Eigen::RowVectorXd& d : neighbor_deltas) sum += d;
    return classifier_row + sum / double(neighbor_deltas.size());
}

Eigen::VectorXd nnls_enumerate(const Eigen::VectorXd& target,
                               const Eigen::MatrixXd& active_atoms) {
    const int n = int(active_atoms.cols());
    double best_res = target.norm();
    Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<int> free_idx;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) free_idx.push_back(i);
        Eigen::MatrixXd sub(active_atoms.rows(), long(free_idx.size()));
        for (size_t k = 0; k < free_idx.size(); ++k) sub.col(long(k)) = active_atoms.col(free_idx[k]);
        Eigen::VectorXd g = sub.colPivHouseholderQr().solve(target);
        bool feasible = true;
        for (long k = 0; k < g.size(); ++k)
            if (g[k] < 0) feasible = false;
        if (!feasible) continue;
        double res = (target - sub * g).norm();
        if (res < best_res - 1e-15) {
            best_res = res;
            best.setZero();
            for (size_t k = 0; k < free_idx.size(); ++k) best[free_idx[k]] = g[long(k)];
        }
    }
    return best;
}

ExhaustiveNnls exhaustive_best_support(const Eigen::VectorXd& target,
                                       const Eigen::MatrixXd& dictionary, int max_support) {
    const int m = int(dictionary.cols());
    ExhaustiveNnls best;
    best.residual_norm = target.norm();
    best.gamma = Eigen::VectorXd();

    std::vector<int> subset;
    // enumerate supports of size 1..max_support
    auto consider = [&](const std::vector<int>& sup) {
        Eigen::MatrixXd sub(dictionary.rows(), long(sup.size()));
        for (size_t k = 0; k < sup.size(); ++k) sub.col(long(k)) = dictionary.col(sup[k]);
        Eigen::VectorXd g = nnls_enumerate(target, sub);
        double res = (target - sub * g).norm();
        if (res < best.residual_norm - 1e-15) {
            best.residual_norm = res;
            best.support.clear();
            std::vector<double> kept;
            for (size_t k = 0; k < sup.size(); ++k) {
                if (g[long(k)] > 0) {
                    best.support.push_back(sup[k]);
                    kept.push_back(g[long(k)]);
                }
            }
            best.gamma = Eigen::Map<Eigen::VectorXd>(kept.data(), long(kept.size()));
        }
    };
    std::function<void(int, int)> rec = [&](int start, int remaining) {
        if (!subset.empty()) consider(subset);
        if (remaining == 0) return;
        for (int i = start; i < m; ++i) {
            subset.push_back(i);
            rec(i + 1, remaining - 1);
            subset.pop_back();
        }
    };
    rec(0, max_support);
    return best;
}

Eigen::VectorXd ridge_gauss(const Eigen::MatrixXd& phi, const Eigen::VectorXd& t,
                            double lambda0) {
    const long d = phi.cols();
    Eigen::MatrixXd a = phi.transpose() * phi;
    for (long i = 0; i < d; ++i) a(i, i) += lambda0;
    Eigen::VectorXd b = phi.transpose() * t;

    // Gaussian elimination with partial pivoting
    for (long col = 0; col < d; ++col) {
        long pivot = col;
        for (long r = col + 1; r < d; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (a(pivot, col) == 0) throw SingularSystemError("singular normal equations");
        if (pivot != col) {
            a.row(pivot).swap(a.row(col));
            std::swap(b[pivot], b[col]);
        }
        for (long r = col + 1; r < d; ++r) {
            double f = a(r, col) / a(col, col);
            a.row(r) -= f * a.row(col);
            b[r] -= f * b[col];
        }
    }
    Eigen::VectorXd x(d);
    for (long r = d - 1; r >= 0; --r) {
        double acc = b[r];
        for (long c = r + 1; c < d; ++c) acc -= a(r, c) * x[c];
        x[r] = acc / a(r, r);
    }
    return x;
}

double average_precision_sweep(std::span<const Detection> dets, const GroundTruthSet& gts,
                               int category, double iou_threshold) {
    int n_gt = gts.total(category);
    if (n_gt == 0) return 0;

    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[size_t(a)].score > dets[size_t(b)].score;
    });

    // greedy matcher, rerun from scratch on each prefix
    auto match_prefix = [&](size_t len, int& tp, int& fp) {
        struct Slot {
            const Box* box;
            bool used = false;
        };
        std::unordered_map<std::string, std::vector<Slot>> remaining;
        for (const auto& [image_id, insts] : gts.images)
            for (const GtInstance& g : insts)
                if (g.category == category) remaining[image_id].push_back({&g.box});
        tp = fp = 0;
        for (size_t i = 0; i < len; ++i) {
            const Detection& d = dets[size_t(order[i])];
            Slot* best = nullptr;
            double best_iou = 0;
            auto it = remaining.find(d.image_id);
            if (it != remaining.end()) {
                for (Slot& s : it->second) {
                    if (s.used) continue;
                    double v = iou(d.box, *s.box);
                    if (v >= iou_threshold && v > best_iou) {
                        best_iou = v;
                        best = &s;
                    }
                }
            }
            if (best) {
                best->used = true;
                ++tp;
            } else {
                ++fp;
            }
        }
    };

    // one PR point per distinct score threshold
    std::vector<std::pair<double, double>> points; // (recall, precision)
    for (size_t len = 1; len <= order.size(); ++len) {
        if (len < order.size() &&
            dets[size_t(order[len])].score == dets[size_t(order[len - 1])].score)
            continue;
        int tp = 0, fp = 0;
        match_prefix(len, tp, fp);
        points.emplace_back(double(tp) / double(n_gt), double(tp) / double(tp + fp));
    }

    std::vector<double> recalls;
    for (const auto& [r, p] : points) recalls.push_back(r);
    std::sort(recalls.begin(), recalls.end());
    recalls.erase(std::unique(recalls.begin(), recalls.end()), recalls.end());

    double ap = 0, prev = 0;
    for (double r : recalls) {
        if (r <= prev) continue;
        double env = 0;
        for (const auto& [rr, pp] : points)
            if (rr >= r) env = std::max(env, pp);
        ap += (r - prev) * env;
        prev = r;
    }
    return ap;
}

} // namespace simxfer::ref
