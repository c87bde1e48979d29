#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "simxfer/evaluation.hpp"
#include "simxfer/reference.hpp"
#include "simxfer/rng.hpp"
#include "test_util.hpp"

using namespace simxfer;

TEST_CASE("iou identities") {
    Box a{10, 10, 4, 6};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    Box far{100, 100, 4, 6};
    CHECK(iou(a, far) == 0.0);
    // unit squares centered at (0.5,0.5) and (1.0,0.5): overlap 0.5, union 1.5
    Box u1{0.5, 0.5, 1, 1}, u2{1.0, 0.5, 1, 1};
    CHECK(iou(u1, u2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("nms keeps a single detection") {
    std::vector<Detection> dets{{"im", 0, 0.5, {10, 10, 4, 4}}};
    CHECK(nms(dets, 0.3).size() == 1);
}

TEST_CASE("nms suppresses the lower-scored duplicate box") {
    std::vector<Detection> dets{{"im", 0, 0.8, {10, 10, 4, 4}}, {"im", 0, 0.9, {10, 10, 4, 4}}};
    std::vector<Detection> kept = nms(dets, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms keeps the chain endpoints A and C") {
    // A overlaps B with IoU 0.5, B overlaps C with 0.5, A and C fall below
    // the threshold; greedy keeps A then C
    Box a{0, 0, 1, 1};
    Box b{1.0 / 3.0, 0, 1, 1};
    Box c{2.0 / 3.0, 0, 1, 1};
    REQUIRE(iou(a, b) == doctest::Approx(0.5));
    REQUIRE(iou(b, c) == doctest::Approx(0.5));
    REQUIRE(iou(a, c) < 0.3);
    std::vector<Detection> dets{{"im", 0, 0.9, a}, {"im", 0, 0.8, b}, {"im", 0, 0.7, c}};
    std::vector<Detection> kept = nms(dets, 0.3);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].box.x == a.x);
    CHECK(kept[1].box.x == c.x);
}

TEST_CASE("nms treats images and categories independently") {
    std::vector<Detection> dets{{"im0", 0, 0.9, {10, 10, 4, 4}},
                                {"im1", 0, 0.8, {10, 10, 4, 4}},
                                {"im0", 1, 0.7, {10, 10, 4, 4}}};
    CHECK(nms(dets, 0.3).size() == 3);
}

TEST_CASE("nms output does not depend on input order for distinct scores") {
    Rng rng(71);
    std::vector<Detection> dets;
    for (int i = 0; i < 30; ++i)
        dets.push_back({"im" + std::to_string(i % 2), i % 3, rng.uniform(),
                        {rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2, 10),
                         rng.uniform(2, 10)}});
    std::vector<Detection> kept_a = nms(dets, 0.3);
    std::vector<Detection> perm = dets;
    for (size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[size_t(rng.uniform_int(0, int(i) - 1))]);
    std::vector<Detection> kept_b = nms(perm, 0.3);
    auto key = [](const Detection& d) {
        return std::make_tuple(d.image_id, d.category, d.score, d.box.x, d.box.y);
    };
    std::vector<decltype(key(dets[0]))> ka, kb;
    for (const Detection& d : kept_a) ka.push_back(key(d));
    for (const Detection& d : kept_b) kb.push_back(key(d));
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    CHECK(ka == kb);
}

namespace {

GroundTruthSet gts_one(const std::string& im, int cat, const Box& b) {
    GroundTruthSet g;
    g.add(im, {cat, b});
    return g;
}

} // namespace

TEST_CASE("a single detection on the single gt scores AP 1") {
    Box g{10, 10, 4, 4};
    std::vector<Detection> dets{{"im", 0, 0.9, g}};
    ApResult r = average_precision(dets, gts_one("im", 0, g), 0, 0.5);
    CHECK(r.ap == doctest::Approx(1.0));
    CHECK(r.defined);
}

TEST_CASE("a trailing false positive does not erase a perfect hit") {
    Box g{10, 10, 4, 4};
    std::vector<Detection> dets{{"im", 0, 0.9, g}, {"im", 0, 0.5, {100, 100, 4, 4}}};
    ApResult r = average_precision(dets, gts_one("im", 0, g), 0, 0.5);
    CHECK(r.ap == doctest::Approx(1.0));
}

TEST_CASE("the [TP, FP, TP] fixture over two gts yields AP 5/6") {
    GroundTruthSet gts;
    Box g1{10, 10, 4, 4}, g2{30, 30, 4, 4};
    gts.add("im0", {0, g1});
    gts.add("im1", {0, g2});
    std::vector<Detection> dets{{"im0", 0, 0.9, g1},
                                {"im0", 0, 0.8, {70, 70, 4, 4}},
                                {"im1", 0, 0.7, g2}};
    ApResult r = average_precision(dets, gts, 0, 0.5);
    CHECK(r.ap == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(r.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("duplicate hits on one gt count as false positives") {
    Box g{10, 10, 4, 4};
    std::vector<Detection> dets{{"im", 0, 0.9, g}, {"im", 0, 0.8, g}};
    ApResult r = average_precision(dets, gts_one("im", 0, g), 0, 0.5);
    CHECK(r.ap == doctest::Approx(1.0)); // envelope: duplicate comes after the hit
    // reversed scores: duplicate first is still one TP, one FP
    std::vector<Detection> rev{{"im", 0, 0.8, g}, {"im", 0, 0.9, g}};
    ApResult r2 = average_precision(rev, gts_one("im", 0, g), 0, 0.5);
    CHECK(r2.ap == doctest::Approx(1.0));
}

TEST_CASE("empty gt with detections gives zero, both empty is flagged undefined") {
    GroundTruthSet empty;
    std::vector<Detection> dets{{"im", 0, 0.9, {10, 10, 4, 4}}};
    ApResult zero = average_precision(dets, empty, 0, 0.5);
    CHECK(zero.ap == 0.0);
    CHECK(zero.defined);
    ApResult undef = average_precision({}, empty, 0, 0.5);
    CHECK_FALSE(undef.defined);
}

TEST_CASE("a detection matches only gts of its own image") {
    Box g{10, 10, 4, 4};
    GroundTruthSet gts = gts_one("im0", 0, g);
    std::vector<Detection> dets{{"im1", 0, 0.9, g}}; // right box, wrong image
    ApResult r = average_precision(dets, gts, 0, 0.5);
    CHECK(r.ap == 0.0);
}

namespace {

struct RandomEval {
    std::vector<Detection> dets;
    GroundTruthSet gts;
};

RandomEval random_eval(Rng& rng, int max_dets, int max_gts) {
    RandomEval out;
    int n_gt = rng.uniform_int(0, max_gts);
    for (int i = 0; i < n_gt; ++i)
        out.gts.add("im" + std::to_string(rng.uniform_int(0, 3)),
                    {0,
                     {rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(4, 20),
                      rng.uniform(4, 20)}});
    int n_det = rng.uniform_int(1, max_dets);
    for (int i = 0; i < n_det; ++i) {
        Box b;
        if (rng.uniform() < 0.5 && n_gt > 0) {
            // jitter a random gt so some detections land near a real box
            const auto& img = out.gts.images[size_t(rng.uniform_int(0, int(out.gts.images.size()) - 1))];
            const Box& g = img.second[size_t(rng.uniform_int(0, int(img.second.size()) - 1))].box;
            b = {g.x + rng.uniform(-4, 4), g.y + rng.uniform(-4, 4),
                 g.w * rng.uniform(0.7, 1.4), g.h * rng.uniform(0.7, 1.4)};
            out.dets.push_back({img.first, 0, rng.uniform(), b});
        } else {
            b = {rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(4, 20), rng.uniform(4, 20)};
            out.dets.push_back({"im" + std::to_string(rng.uniform_int(0, 3)), 0, rng.uniform(), b});
        }
    }
    return out;
}

} // namespace

TEST_CASE("average precision matches the threshold-sweep oracle on random instances") {
    Rng rng(72);
    for (int trial = 0; trial < 100; ++trial) {
        RandomEval e = random_eval(rng, 50, 10);
        ApResult mine = average_precision(e.dets, e.gts, 0, 0.5);
        if (!mine.defined) continue;
        double oracle = ref::average_precision_sweep(e.dets, e.gts, 0, 0.5);
        CHECK(std::abs(mine.ap - oracle) <= 1e-9);
    }
}

TEST_CASE("average precision is invariant under monotone score transforms") {
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        RandomEval e = random_eval(rng, 40, 8);
        ApResult base = average_precision(e.dets, e.gts, 0, 0.5);
        // rank remap: replace scores by fresh increasing values in rank order
        std::vector<size_t> order(e.dets.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return e.dets[a].score < e.dets[b].score; });
        std::vector<Detection> remapped = e.dets;
        double v = rng.uniform(0, 1);
        for (size_t i : order) {
            remapped[i].score = v;
            v += rng.uniform(0.01, 1.0);
        }
        ApResult moved = average_precision(remapped, e.gts, 0, 0.5);
        CHECK(moved.ap == doctest::Approx(base.ap).epsilon(1e-12));
        CHECK(moved.defined == base.defined);
    }
}

TEST_CASE("AP stays within [0,1] and a trailing FP never raises it") {
    Rng rng(74);
    for (int trial = 0; trial < 50; ++trial) {
        RandomEval e = random_eval(rng, 30, 6);
        ApResult base = average_precision(e.dets, e.gts, 0, 0.5);
        CHECK(base.ap >= 0.0);
        CHECK(base.ap <= 1.0);
        double min_score = 1e18;
        for (const Detection& d : e.dets) min_score = std::min(min_score, d.score);
        std::vector<Detection> plus = e.dets;
        plus.push_back({"im0", 0, min_score - 1.0, {500, 500, 2, 2}});
        ApResult worse = average_precision(plus, e.gts, 0, 0.5);
        CHECK(worse.ap <= base.ap + 1e-12);
    }
}

TEST_CASE("mean_ap averages the requested subset and excludes undefined rows") {
    CategoryRegistry reg = testutil::small_registry(2, 2);
    std::vector<CategoryAp> aps(4);
    for (int i = 0; i < 4; ++i) aps[size_t(i)].category = i;
    aps[0].result = {1.0, true, 2, 2};
    aps[1].result = {0.5, true, 2, 2};
    aps[2].result = {0.25, true, 1, 1};
    aps[3].result = {0.0, false, 0, 0}; // undefined, excluded
    CHECK(mean_ap(aps, reg, Subset::Strong) == doctest::Approx(0.75));
    CHECK(mean_ap(aps, reg, Subset::Weak) == doctest::Approx(0.25));
    CHECK(mean_ap(aps, reg, Subset::All) == doctest::Approx((1.0 + 0.5 + 0.25) / 3));
}

TEST_CASE("mean_ap on an all-undefined subset raises EmptySubsetError") {
    CategoryRegistry reg = testutil::small_registry(1, 1);
    std::vector<CategoryAp> aps(2);
    aps[0] = {0, {0.5, true, 1, 1}};
    aps[1] = {1, {0.0, false, 0, 0}};
    CHECK_THROWS_AS(mean_ap(aps, reg, Subset::Weak), EmptySubsetError);
}

TEST_CASE("evaluate matches the serial reference on a random problem") {
    CategoryRegistry reg = testutil::small_registry(3, 2);
    Rng rng(75);
    std::vector<Detection> dets;
    GroundTruthSet gts;
    for (int c = 0; c < 5; ++c) {
        for (int i = 0; i < 4; ++i) {
            std::string im = "im" + std::to_string(i);
            Box g{rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(5, 15), rng.uniform(5, 15)};
            gts.add(im, {c, g});
            dets.push_back({im, c, rng.uniform(),
                            {g.x + rng.uniform(-2, 2), g.y + rng.uniform(-2, 2), g.w, g.h}});
            dets.push_back({im, c, rng.uniform(),
                            {rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(5, 15),
                             rng.uniform(5, 15)}});
        }
    }
    EvalConfig cfg;
    EvalReport par = evaluate(dets, gts, reg, cfg);
    EvalReport ser = ref::evaluate(dets, gts, reg, cfg);
    CHECK(par.map_all == ser.map_all);
    CHECK(par.map_weak == ser.map_weak);
    for (size_t i = 0; i < par.per_category.size(); ++i)
        CHECK(par.per_category[i].result.ap == ser.per_category[i].result.ap);
}

TEST_CASE("report csv lists every category and the three summary rows") {
    testutil::TempDir tmp("report");
    CategoryRegistry reg = testutil::small_registry(1, 1);
    EvalReport rep;
    rep.per_category = {{0, {0.5, true, 1, 1}}, {1, {0.25, true, 1, 1}}};
    rep.map_strong = 0.5;
    rep.map_weak = 0.25;
    rep.map_all = 0.375;
    save_report_csv(rep, reg, tmp.file("r.csv"));
    std::string text = testutil::slurp(tmp.file("r.csv"));
    CHECK(text.find("category_id,subset,AP") != std::string::npos);
    CHECK(text.find("0,strong,0.5") != std::string::npos);
    CHECK(text.find("mAP_weak,,0.25") != std::string::npos);
}
