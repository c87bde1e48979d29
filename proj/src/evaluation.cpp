#include "simxfer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "simxfer/log.hpp"

namespace simxfer {

double iou(const Box& a, const Box& b) {
    validate_box(a);
    validate_box(b);
    const auto ca = box_to_corners(a);
    const auto cb = box_to_corners(b);
    const double iw = std::min(ca[2], cb[2]) - std::max(ca[0], cb[0]);
    const double ih = std::min(ca[3], cb[3]) - std::max(ca[1], cb[1]);
    if (iw <= 0 || ih <= 0) return 0;
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

std::vector<Detection> nms(std::span<const Detection> dets, double nms_iou) {
    if (!(nms_iou > 0 && nms_iou < 1))
        throw ConfigError("nms threshold must lie in (0,1), got " + fmt_g17(nms_iou));
    // group indices by image and category, deterministically
    std::map<std::pair<std::string, int>, std::vector<int>> groups;
    for (int i = 0; i < int(dets.size()); ++i)
        groups[{dets[size_t(i)].image_id, dets[size_t(i)].category}].push_back(i);

    std::vector<Detection> out;
    for (auto& [key, idx] : groups) {
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return dets[size_t(a)].score > dets[size_t(b)].score;
        });
        std::vector<int> kept;
        for (int i : idx) {
            bool suppressed = false;
            for (int k : kept) {
                if (iou(dets[size_t(i)].box, dets[size_t(k)].box) > nms_iou) {
                    suppressed = true;
                    break;
                }
            }
            if (!suppressed) kept.push_back(i);
        }
        for (int k : kept) out.push_back(dets[size_t(k)]);
    }
    return out;
}

ApResult average_precision(std::span<const Detection> dets, const GroundTruthSet& gts,
                           int category, double iou_threshold) {
    if (!(iou_threshold > 0 && iou_threshold < 1))
        throw ConfigError("IoU threshold must lie in (0,1), got " + fmt_g17(iou_threshold));
    ApResult res;
    res.gt_count = gts.total(category);
    res.det_count = int(dets.size());
    if (res.gt_count == 0 && res.det_count == 0) {
        res.defined = false;
        return res;
    }
    if (res.gt_count == 0) return res; // every detection is a false positive

    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[size_t(a)].score > dets[size_t(b)].score;
    });

    // gt bookkeeping per image for this category
    struct GtSlot {
        const Box* box;
        bool matched = false;
    };
    std::unordered_map<std::string, std::vector<GtSlot>> remaining;
    for (const auto& [image_id, insts] : gts.images)
        for (const GtInstance& g : insts)
            if (g.category == category) remaining[image_id].push_back({&g.box});

    std::vector<double> precision, recall;
    precision.reserve(dets.size());
    recall.reserve(dets.size());
    int tp = 0, fp = 0;
    for (int i : order) {
        const Detection& d = dets[size_t(i)];
        if (d.category != category)
            throw IndexMismatchError("average_precision expects a single-category list");
        GtSlot* best = nullptr;
        double best_iou = 0;
        auto it = remaining.find(d.image_id);
        if (it != remaining.end()) {
            for (GtSlot& slot : it->second) {
                if (slot.matched) continue;
                double v = iou(d.box, *slot.box);
                if (v >= iou_threshold && v > best_iou) {
                    best_iou = v;
                    best = &slot;
                }
            }
        }
        if (best) {
            best->matched = true;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(double(tp) / double(tp + fp));
        recall.push_back(double(tp) / double(res.gt_count));
    }

    // right-to-left envelope, then sum over recall increments
    double ap = 0;
    double env = 0;
    std::vector<double> envelope(precision.size());
    for (int i = int(precision.size()) - 1; i >= 0; --i) {
        env = std::max(env, precision[size_t(i)]);
        envelope[size_t(i)] = env;
    }
    double prev_recall = 0;
    for (size_t i = 0; i < precision.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * envelope[i];
            prev_recall = recall[i];
        }
    }
    res.ap = ap;
    return res;
}

double mean_ap(const std::vector<CategoryAp>& per_category, const CategoryRegistry& registry,
               Subset subset) {
    double sum = 0;
    int n = 0;
    for (const CategoryAp& c : per_category) {
        bool strong = registry.is_strong(c.category);
        if (subset == Subset::Strong && !strong) continue;
        if (subset == Subset::Weak && strong) continue;
        if (!c.result.defined) {
            log_warn("category '" + registry.at(c.category).name +
                     "' has no detections and no ground truth; excluded from mAP");
            continue;
        }
        sum += c.result.ap;
        ++n;
    }
    if (n == 0) throw EmptySubsetError("no categories with defined AP in the requested subset");
    return sum / double(n);
}

EvalReport evaluate(std::span<const Detection> dets, const GroundTruthSet& gts,
                    const CategoryRegistry& registry, const EvalConfig& cfg) {
    if (!(cfg.iou_threshold > 0 && cfg.iou_threshold < 1))
        throw ConfigError("IoU threshold must lie in (0,1), got " + fmt_g17(cfg.iou_threshold));
    std::vector<std::vector<Detection>> by_cat(size_t(registry.size()));
    for (const Detection& d : dets) {
        if (d.category < 0 || d.category >= registry.size())
            throw IndexMismatchError("detection category id " + std::to_string(d.category) +
                                     " is outside the registry");
        by_cat[size_t(d.category)].push_back(d);
    }

    EvalReport report;
    report.per_category.resize(size_t(registry.size()));
#pragma omp parallel for schedule(static)
    for (long c = 0; c < long(registry.size()); ++c) {
        report.per_category[size_t(c)] = {
            int(c), average_precision(by_cat[size_t(c)], gts, int(c), cfg.iou_threshold)};
    }
    report.map_strong = mean_ap(report.per_category, registry, Subset::Strong);
    report.map_weak = mean_ap(report.per_category, registry, Subset::Weak);
    report.map_all = mean_ap(report.per_category, registry, Subset::All);
    return report;
}

void save_report_csv(const EvalReport& report, const CategoryRegistry& registry,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "category_id,subset,AP\n";
    for (const CategoryAp& c : report.per_category) {
        out << c.category << ',' << (registry.is_strong(c.category) ? "strong" : "weak") << ','
            << (c.result.defined ? fmt_g17(c.result.ap) : "undefined") << '\n';
    }
    out << "mAP_strong,," << fmt_g17(report.map_strong) << '\n';
    out << "mAP_weak,," << fmt_g17(report.map_weak) << '\n';
    out << "mAP_all,," << fmt_g17(report.map_all) << '\n';
}

} // namespace simxfer
