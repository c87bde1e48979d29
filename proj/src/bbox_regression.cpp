#include "simxfer/bbox_regression.hpp"

#include <cmath>
#include <unordered_map>

#include "simxfer/evaluation.hpp"
#include "simxfer/log.hpp"

namespace simxfer {

RegressionTarget BoxRegressor::predict(const Eigen::VectorXd& feature) const {
    if (feature.size() + 1 != wx.size())
        throw DimensionError("regressor expects feature dim " + std::to_string(wx.size() - 1) +
                             ", got " + std::to_string(feature.size()));
    Eigen::VectorXd x(wx.size());
    x.head(feature.size()) = feature;
    x[feature.size()] = 1.0;
    return {wx.dot(x), wy.dot(x), ww.dot(x), wh.dot(x)};
}

BoxRegressor BoxRegressor::zero(int category, int feature_dim, double lambda0) {
    BoxRegressor r;
    r.category = category;
    r.lambda0 = lambda0;
    r.wx = Eigen::VectorXd::Zero(feature_dim + 1);
    r.wy = r.wx;
    r.ww = r.wx;
    r.wh = r.wx;
    return r;
}

RegressionTarget make_targets(const Box& p, const Box& g) {
    validate_box(p);
    validate_box(g);
    return {(g.x - p.x) / p.w, (g.y - p.y) / p.h, std::log(g.w / p.w), std::log(g.h / p.h)};
}

Box apply_offsets(const Box& p, const RegressionTarget& t) {
    return {p.x + p.w * t.tx, p.y + p.h * t.ty, p.w * std::exp(t.tw), p.h * std::exp(t.th)};
}

std::map<int, std::vector<TrainingPair>> select_pairs(std::span<const ProposalRecord> proposals,
                                                      const GroundTruthSet& gts,
                                                      double iou_min) {
    std::map<int, std::vector<TrainingPair>> out;
    for (const ProposalRecord& p : proposals) {
        const std::vector<GtInstance>* insts = gts.find(p.image_id);
        if (!insts) continue;
        double best = -1;
        const GtInstance* match = nullptr;
        for (const GtInstance& g : *insts) {
            double v = iou(p.box, g.box);
            if (v > best) {
                best = v;
                match = &g;
            }
        }
        if (!match || best < iou_min) continue;
        out[match->category].push_back({p.feature, make_targets(p.box, match->box)});
    }
    return out;
}

BoxRegressor train_regressor(std::span<const TrainingPair> pairs, int category, double lambda0) {
    if (pairs.empty()) throw InvariantError("train_regressor needs at least one pair");
    const long f = pairs.front().feature.size();
    const long d = f + 1;

    Eigen::MatrixXd phi(long(pairs.size()), d);
    Eigen::MatrixXd targets(long(pairs.size()), 4);
    for (long i = 0; i < long(pairs.size()); ++i) {
        const TrainingPair& p = pairs[size_t(i)];
        if (p.feature.size() != f) throw DimensionError("training pair feature dims disagree");
        phi.row(i).head(f) = p.feature.transpose();
        phi(i, f) = 1.0;
        targets(i, 0) = p.target.tx;
        targets(i, 1) = p.target.ty;
        targets(i, 2) = p.target.tw;
        targets(i, 3) = p.target.th;
    }

    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += lambda0;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        if (lambda0 == 0)
            throw SingularSystemError("normal equations singular with lambda0 = 0");
        throw SingularSystemError("normal equations factorization failed");
    }
    Eigen::MatrixXd w = llt.solve(phi.transpose() * targets); // d x 4

    BoxRegressor reg;
    reg.category = category;
    reg.lambda0 = lambda0;
    reg.wx = w.col(0);
    reg.wy = w.col(1);
    reg.ww = w.col(2);
    reg.wh = w.col(3);
    return reg;
}

std::map<int, BoxRegressor> train_regressors(
    const std::map<int, std::vector<TrainingPair>>& pairs_by_category, double lambda0) {
    std::vector<std::pair<int, const std::vector<TrainingPair>*>> work;
    for (const auto& [cat, pairs] : pairs_by_category)
        if (!pairs.empty()) work.emplace_back(cat, &pairs);
    std::vector<BoxRegressor> trained(work.size());

    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < long(work.size()); ++i) {
        try {
            trained[size_t(i)] = train_regressor(*work[size_t(i)].second,
                                                 work[size_t(i)].first, lambda0);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::map<int, BoxRegressor> out;
    for (size_t i = 0; i < work.size(); ++i) out[work[i].first] = std::move(trained[i]);
    return out;
}

std::map<int, BoxRegressor> transfer_regressors(const std::map<int, BoxRegressor>& strong_regs,
                                                const SimilarityMatrix& sim,
                                                const CategoryRegistry& registry) {
    std::vector<const BoxRegressor*> col_regs(sim.cols.size(), nullptr);
    long dim = -1;
    for (size_t c = 0; c < sim.cols.size(); ++c) {
        const CategoryEntry* e = registry.find(sim.cols[c]);
        if (!e) throw IndexMismatchError("similarity column '" + sim.cols[c] +
                                         "' not in registry");
        auto it = strong_regs.find(e->id);
        if (it != strong_regs.end()) {
            col_regs[c] = &it->second;
            if (dim < 0) dim = it->second.wx.size();
            else if (it->second.wx.size() != dim)
                throw DimensionError("regressor dimensions disagree");
        }
    }
    if (dim < 0) throw CoverageError("no strong regressors supplied");

    std::map<int, BoxRegressor> out;
    for (size_t r = 0; r < sim.rows.size(); ++r) {
        const CategoryEntry* e = registry.find(sim.rows[r]);
        if (!e) throw IndexMismatchError("similarity row '" + sim.rows[r] + "' not in registry");
        BoxRegressor reg = BoxRegressor::zero(e->id, int(dim) - 1, 0);
        for (size_t c = 0; c < sim.cols.size(); ++c) {
            double s = sim.values(long(r), long(c));
            if (s == 0) continue;
            if (!col_regs[c])
                throw CoverageError("no regressor for strong category '" + sim.cols[c] +
                                    "' carrying similarity mass");
            reg.wx += s * col_regs[c]->wx;
            reg.wy += s * col_regs[c]->wy;
            reg.ww += s * col_regs[c]->ww;
            reg.wh += s * col_regs[c]->wh;
            reg.lambda0 = col_regs[c]->lambda0;
        }
        out[e->id] = std::move(reg);
    }
    return out;
}

std::vector<Detection> regress_detections(std::span<const Detection> dets,
                                          std::span<const Eigen::VectorXd> features,
                                          const std::map<int, BoxRegressor>& regs) {
    if (dets.size() != features.size())
        throw DimensionError("detections and features differ in length");
    for (size_t i = 0; i < dets.size(); ++i) {
        auto it = regs.find(dets[i].category);
        if (it == regs.end())
            throw MissingRegressorError("no regressor for category " +
                                        std::to_string(dets[i].category));
        if (features[i].size() + 1 != it->second.wx.size())
            throw DimensionError("detection feature dim does not match its regressor");
    }

    std::vector<Detection> out(dets.begin(), dets.end());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < long(out.size()); ++i) {
        const BoxRegressor& reg = regs.at(out[size_t(i)].category);
        out[size_t(i)].box = apply_offsets(out[size_t(i)].box,
                                           reg.predict(features[size_t(i)]));
    }
    return out;
}

std::vector<Eigen::VectorXd> match_features(std::span<const Detection> dets,
                                            std::span<const ProposalRecord> proposals) {
    struct Key {
        std::string image_id;
        double x, y, w, h;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        size_t operator()(const Key& k) const {
            std::hash<std::string> hs;
            std::hash<double> hd;
            size_t h = hs(k.image_id);
            for (double v : {k.x, k.y, k.w, k.h}) h = h * 1000003 + hd(v);
            return h;
        }
    };
    std::unordered_map<Key, const Eigen::VectorXd*, KeyHash> by_box;
    for (const ProposalRecord& p : proposals)
        by_box[{p.image_id, p.box.x, p.box.y, p.box.w, p.box.h}] = &p.feature;

    std::vector<Eigen::VectorXd> out;
    out.reserve(dets.size());
    for (const Detection& d : dets) {
        auto it = by_box.find({d.image_id, d.box.x, d.box.y, d.box.w, d.box.h});
        if (it == by_box.end())
            throw CoverageError("no proposal feature for a detection in image " + d.image_id);
        out.push_back(*it->second);
    }
    return out;
}

std::map<int, BoxRegressor> load_regressors(const std::string& path,
                                            const CategoryRegistry& registry) {
    LabeledMatrix m = load_matrix(path);
    if (m.values.rows() % 4 != 0)
        throw ParseError(path + ": regressor files hold four rows per category");
    std::map<int, BoxRegressor> out;
    for (long i = 0; i < m.values.rows(); i += 4) {
        const std::string& label = m.row_labels[size_t(i)];
        auto slash = label.rfind('/');
        if (slash == std::string::npos || label.substr(slash + 1) != "wx")
            throw ParseError(path + ": expected '<category>/wx' row, got '" + label + "'");
        std::string name = label.substr(0, slash);
        for (int k = 1; k < 4; ++k) {
            const std::string& l = m.row_labels[size_t(i + k)];
            static const char* comps[] = {"wx", "wy", "ww", "wh"};
            if (l != name + "/" + comps[k])
                throw ParseError(path + ": unexpected row '" + l + "'");
        }
        const CategoryEntry* e = registry.find(name);
        if (!e) throw IndexMismatchError(path + ": category '" + name + "' not in registry");
        BoxRegressor reg;
        reg.category = e->id;
        reg.wx = m.values.row(i).transpose();
        reg.wy = m.values.row(i + 1).transpose();
        reg.ww = m.values.row(i + 2).transpose();
        reg.wh = m.values.row(i + 3).transpose();
        out[e->id] = std::move(reg);
    }
    return out;
}

void save_regressors(const std::map<int, BoxRegressor>& regs, const CategoryRegistry& registry,
                     const std::string& path) {
    LabeledMatrix m;
    m.kind = "bbox-regressor";
    long dim = regs.empty() ? 1 : regs.begin()->second.wx.size();
    for (long j = 0; j + 1 < dim; ++j) m.col_labels.push_back("f" + std::to_string(j));
    m.col_labels.push_back("bias");
    m.values.resize(long(regs.size()) * 4, dim);
    long r = 0;
    for (const auto& [cat, reg] : regs) {
        const std::string& name = registry.at(cat).name;
        for (const char* comp : {"wx", "wy", "ww", "wh"})
            m.row_labels.push_back(name + "/" + comp);
        m.values.row(r++) = reg.wx.transpose();
        m.values.row(r++) = reg.wy.transpose();
        m.values.row(r++) = reg.ww.transpose();
        m.values.row(r++) = reg.wh.transpose();
    }
    save_matrix(m, path);
}

} // namespace simxfer
