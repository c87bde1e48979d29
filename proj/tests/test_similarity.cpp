#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "simxfer/similarity.hpp"
#include "simxfer/rng.hpp"
#include "test_util.hpp"

using namespace simxfer;

namespace {

// registry with strong cat0..cat{m-1}, weak after
CategoryRegistry reg3() { return testutil::small_registry(2, 1); } // cat0,cat1 strong, cat2 weak

ScoreTable make_scores(const CategoryRegistry& reg,
                       const std::vector<std::pair<std::string, Eigen::VectorXd>>& recs) {
    ScoreTable t;
    for (const CategoryEntry& e : reg.entries()) t.columns.push_back(e.name);
    int i = 0;
    for (const auto& [cat, scores] : recs)
        t.records.push_back({"im" + std::to_string(i++), cat, scores});
    return t;
}

EmbeddingTable cat_embeddings(const CategoryRegistry& reg,
                              const std::vector<Eigen::VectorXd>& vecs) {
    EmbeddingTable t;
    t.dim = int(vecs.front().size());
    for (const CategoryEntry& e : reg.entries()) t.put(e.name, vecs[size_t(e.id)]);
    return t;
}

} // namespace

TEST_CASE("visual similarity accumulates and renormalizes strong-column mass") {
    CategoryRegistry reg = reg3();
    Eigen::VectorXd s1(3), s2(3);
    s1 << 0.2, 0.3, 0.5; // strong mass (0.2, 0.3)
    s2 << 0.4, 0.1, 0.5;
    ScoreTable t = make_scores(reg, {{"cat2", s1}, {"cat2", s2}});
    SimilarityMatrix sim = visual_similarity(t, reg);
    REQUIRE(sim.rows == std::vector<std::string>{"cat2"});
    CHECK(sim.values(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sim.values(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("visual similarity keeps an already-normalized single image") {
    CategoryRegistry reg = reg3();
    Eigen::VectorXd s(3);
    s << 0.5, 0.5, 0.0;
    SimilarityMatrix sim = visual_similarity(make_scores(reg, {{"cat2", s}}), reg);
    CHECK(sim.values(0, 0) == doctest::Approx(0.5));
    CHECK(sim.values(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("weak category without records raises MissingCategoryError") {
    CategoryRegistry reg = testutil::small_registry(2, 2); // weak cat2, cat3
    Eigen::VectorXd s(4);
    s << 0.5, 0.5, 0, 0;
    ScoreTable t = make_scores(reg, {{"cat2", s}});
    CHECK_THROWS_AS(visual_similarity(t, reg), MissingCategoryError);
}

TEST_CASE("visual similarity is invariant to duplicating every record") {
    CategoryRegistry reg = testutil::small_registry(3, 2);
    Rng rng(11);
    std::vector<std::pair<std::string, Eigen::VectorXd>> recs;
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd s = rng.gaussian(5).cwiseAbs();
        s /= s.sum();
        recs.emplace_back(i % 2 ? "cat3" : "cat4", s);
    }
    auto doubled = recs;
    doubled.insert(doubled.end(), recs.begin(), recs.end());
    SimilarityMatrix a = visual_similarity(make_scores(reg, recs), reg);
    SimilarityMatrix b = visual_similarity(make_scores(reg, doubled), reg);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("category embedding normalizes a single resolved term") {
    EmbeddingTable t;
    t.dim = 2;
    Eigen::VectorXd v(2);
    v << 3, 4;
    t.put("t", v);
    Eigen::VectorXd e = build_category_embedding({"t"}, t);
    CHECK(e[0] == doctest::Approx(0.6));
    CHECK(e[1] == doctest::Approx(0.8));
}

TEST_CASE("category embedding sums two resolved terms") {
    EmbeddingTable t;
    t.dim = 2;
    Eigen::VectorXd a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    t.put("a", a);
    t.put("b", b);
    Eigen::VectorXd e = build_category_embedding({"a", "b"}, t);
    CHECK(e[0] == doctest::Approx(0.7071068).epsilon(1e-6));
    CHECK(e[1] == doctest::Approx(0.7071068).epsilon(1e-6));
}

TEST_CASE("category embedding falls back through case variants and phrase words") {
    EmbeddingTable t;
    t.dim = 2;
    Eigen::VectorXd a(2), b(2), c(2);
    a << 1, 0;
    b << 0, 1;
    c << 1, 1;
    t.put("aeroplane", a);
    t.put("Bicycle", b);
    t.put("baby", c);
    t.put("bed", c);
    // exact miss, lowercase hit
    CHECK((build_category_embedding({"AEROPLANE"}, t) - a).norm() <= 1e-12);
    // exact miss, Capitalized hit
    CHECK((build_category_embedding({"bicycle"}, t) - b).norm() <= 1e-12);
    // multiword phrase resolves word by word
    Eigen::VectorXd bb = build_category_embedding({"baby bed"}, t);
    CHECK(bb[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    // extra labels join the term list
    Eigen::VectorXd over = build_category_embedding({"zzz"}, t, {"baby"});
    CHECK(over[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("unresolvable synset raises UnresolvableError") {
    EmbeddingTable empty;
    empty.dim = 2;
    CHECK_THROWS_AS(build_category_embedding({"zzz"}, empty), UnresolvableError);
}

TEST_CASE("knn semantic similarity uses smoothed inverse distances") {
    CategoryRegistry reg = reg3();
    Eigen::VectorXd s0(2), s1(2), w(2);
    s0 << 1, 0;
    SUBCASE("identical to one strong category, distance 1 to the other") {
        s1 << 0.5, std::sqrt(3.0) / 2.0; // unit vector at distance 1 from s0
        EmbeddingTable t = cat_embeddings(reg, {s0, s1, s0});
        SimilarityMatrix sim = semantic_similarity_knn(t, reg);
        CHECK(sim.values(0, 0) == doctest::Approx(0.999999).epsilon(1e-6));
        CHECK(sim.values(0, 1) == doctest::Approx(0.000001).epsilon(1e-2));
    }
    SUBCASE("equidistant strong categories split evenly") {
        s1 << 0, 1;
        w << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
        EmbeddingTable t = cat_embeddings(reg, {s0, s1, w});
        SimilarityMatrix sim = semantic_similarity_knn(t, reg);
        CHECK(sim.values(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(sim.values(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("knn weights follow inverse distances (1,1,2) -> (0.4,0.4,0.2)") {
    // unit vectors at 60 degrees have distance 1, the antipode distance 2
    CategoryRegistry reg3s = testutil::small_registry(3, 1);
    Eigen::VectorXd w2(2), a(2), b(2), c(2);
    w2 << 1, 0;
    a << 0.5, std::sqrt(3.0) / 2.0;
    b << 0.5, -std::sqrt(3.0) / 2.0;
    c << -1, 0;
    SimilarityMatrix exact = semantic_similarity_knn(cat_embeddings(reg3s, {a, b, c, w2}), reg3s);
    CHECK(exact.values(0, 0) == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(exact.values(0, 1) == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(exact.values(0, 2) == doctest::Approx(0.2).epsilon(1e-5));

    CategoryRegistry reg = testutil::small_registry(4, 1);
    Rng rng(13);
    std::vector<Eigen::VectorXd> vecs;
    for (int i = 0; i < 5; ++i) vecs.push_back(testutil::unit(rng, 6));
    SimilarityMatrix sim = semantic_similarity_knn(cat_embeddings(reg, vecs), reg);
    // row entry ordering equals ascending-distance ordering
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double da = (vecs[4] - vecs[size_t(a)]).norm();
            double db = (vecs[4] - vecs[size_t(b)]).norm();
            if (da < db) CHECK(sim.values(0, a) > sim.values(0, b));
        }
}

TEST_CASE("sparse semantic similarity recovers exact matches and combinations") {
    CategoryRegistry reg = reg3();
    Eigen::VectorXd s0(4), s1(4);
    s0 << 1, 0, 0, 0;
    s1 << 0, 1, 0, 0;
    SUBCASE("weak equal to a strong atom gives a one-hot row") {
        EmbeddingTable t = cat_embeddings(reg, {s0, s1, s0});
        SimilarityMatrix sim = semantic_similarity_sparse(t, reg, {100.0, 2, 1e-4, 500});
        CHECK(sim.values(0, 0) == doctest::Approx(1.0));
        CHECK(sim.values(0, 1) == 0.0);
    }
    SUBCASE("balanced combination of orthonormal atoms splits evenly") {
        Eigen::VectorXd w = (0.5 * s0 + 0.5 * s1).normalized();
        EmbeddingTable t = cat_embeddings(reg, {s0, s1, w});
        SimilarityMatrix sim = semantic_similarity_sparse(t, reg, {100.0, 2, 1e-4, 500});
        CHECK(sim.values(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(sim.values(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(sim.empty_row[0] == 0);
    }
    SUBCASE("weak orthogonal to every atom is flagged all-zero") {
        Eigen::VectorXd w(4);
        w << 0, 0, 1, 0;
        EmbeddingTable t = cat_embeddings(reg, {s0, s1, w});
        SimilarityMatrix sim = semantic_similarity_sparse(t, reg, {100.0, 2, 1e-4, 500});
        CHECK(sim.empty_row[0] == 1);
        CHECK(sim.values.row(0).sum() == 0.0);
    }
}

TEST_CASE("lsda baseline selects neighbors by classifier weight distance") {
    CategoryRegistry reg = testutil::small_registry(3, 1); // strong cat0..2, weak cat3
    HeadMatrix cls;
    cls.kind = HeadKind::Classifier;
    cls.rows = {"cat0", "cat1", "cat2", "cat3"};
    cls.values.resize(4, 2);
    // distances from cat3: cat0 -> 1, cat1 -> 3, cat2 -> 7
    cls.values << 1, 0, 3, 0, 7, 0, 0, 0;
    SUBCASE("k=1 gives a one-hot row at the nearest strong category") {
        SimilarityMatrix sim = lsda_baseline_similarity(cls, reg, {TruncMode::Average, 1});
        CHECK(sim.values(0, 0) == 1.0);
        CHECK(sim.values.row(0).sum() == 1.0);
    }
    SUBCASE("k=m average gives the uniform row") {
        SimilarityMatrix sim = lsda_baseline_similarity(cls, reg, {TruncMode::Average, 3});
        for (int c = 0; c < 3; ++c) CHECK(sim.values(0, c) == doctest::Approx(1.0 / 3));
    }
    SUBCASE("weighted k=2 renormalizes inverse distances (1,3) -> (0.75,0.25)") {
        SimilarityMatrix sim = lsda_baseline_similarity(cls, reg, {TruncMode::Weighted, 2});
        CHECK(sim.values(0, 0) == doctest::Approx(0.75).epsilon(1e-5));
        CHECK(sim.values(0, 1) == doctest::Approx(0.25).epsilon(1e-5));
        CHECK(sim.values(0, 2) == 0.0);
    }
}

TEST_CASE("truncate keeps the k largest entries") {
    SimilarityMatrix sim;
    sim.rows = {"w"};
    sim.cols = {"a", "b", "c"};
    sim.values.resize(1, 3);
    sim.values << 0.5, 0.3, 0.2;
    sim.empty_row = {0};
    SUBCASE("weighted renormalizes the kept mass") {
        SimilarityMatrix out = truncate(sim, {TruncMode::Weighted, 2});
        CHECK(out.values(0, 0) == doctest::Approx(0.625).epsilon(1e-12));
        CHECK(out.values(0, 1) == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(out.values(0, 2) == 0.0);
    }
    SUBCASE("average assigns 1/k to each kept entry") {
        SimilarityMatrix out = truncate(sim, {TruncMode::Average, 2});
        CHECK(out.values(0, 0) == 0.5);
        CHECK(out.values(0, 1) == 0.5);
        CHECK(out.values(0, 2) == 0.0);
    }
    SUBCASE("weighted k=m is the identity on a normalized row") {
        SimilarityMatrix out = truncate(sim, {TruncMode::Weighted, 3});
        CHECK((out.values - sim.values).cwiseAbs().maxCoeff() <= 1e-15);
    }
    SUBCASE("ties break toward the lower column id") {
        sim.values << 0.4, 0.3, 0.3;
        SimilarityMatrix out = truncate(sim, {TruncMode::Average, 2});
        CHECK(out.values(0, 1) == 0.5);
        CHECK(out.values(0, 2) == 0.0);
    }
}

TEST_CASE("mixture keeps only co-occurring categories") {
    SimilarityMatrix sv, ss;
    sv.rows = ss.rows = {"w"};
    sv.cols = ss.cols = {"a", "b", "c"};
    sv.values.resize(1, 3);
    ss.values.resize(1, 3);
    sv.empty_row = ss.empty_row = {0};
    sv.values << 0.6, 0.4, 0.0;
    ss.values << 0.5, 0.0, 0.5;
    SimilarityMatrix mixed = mixture(sv, ss, {0.6, true});
    CHECK(mixed.values(0, 0) == 1.0);
    CHECK(mixed.values(0, 1) == 0.0);
    CHECK(mixed.values(0, 2) == 0.0);
}

TEST_CASE("mixture endpoints reduce to the single modalities on shared support") {
    Rng rng(17);
    SimilarityMatrix sv, ss;
    sv.rows = ss.rows = {"w0", "w1"};
    sv.cols = ss.cols = {"a", "b", "c", "d"};
    sv.values.resize(2, 4);
    ss.values.resize(2, 4);
    sv.empty_row = ss.empty_row = {0, 0};
    for (int r = 0; r < 2; ++r) {
        Eigen::VectorXd a = rng.gaussian(4).cwiseAbs(), b = rng.gaussian(4).cwiseAbs();
        b[3] = 0; // ss support misses column d
        sv.values.row(r) = (a / a.sum()).transpose();
        ss.values.row(r) = (b / b.sum()).transpose();
    }
    SimilarityMatrix at1 = mixture(sv, ss, {1.0, true});
    SimilarityMatrix at0 = mixture(sv, ss, {0.0, true});
    for (int r = 0; r < 2; ++r) {
        // restrict to the shared support and renormalize by hand, summing in
        // ascending column order like the library does
        Eigen::RowVectorXd rv = Eigen::RowVectorXd::Zero(4), rs = Eigen::RowVectorXd::Zero(4);
        for (int c = 0; c < 4; ++c) {
            if (sv.values(r, c) > 0 && ss.values(r, c) > 0) {
                rv[c] = sv.values(r, c);
                rs[c] = ss.values(r, c);
            }
        }
        double sum_v = 0, sum_s = 0;
        for (int c = 0; c < 4; ++c) {
            sum_v += rv[c];
            sum_s += rs[c];
        }
        for (int c = 0; c < 4; ++c) {
            rv[c] /= sum_v;
            rs[c] /= sum_s;
        }
        CHECK((at1.values.row(r) - rv).cwiseAbs().maxCoeff() == 0.0);
        CHECK((at0.values.row(r) - rs).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("mixture with full shared support is a componentwise convex combination") {
    Rng rng(19);
    SimilarityMatrix sv, ss;
    sv.rows = ss.rows = {"w"};
    sv.cols = ss.cols = {"a", "b", "c"};
    sv.values.resize(1, 3);
    ss.values.resize(1, 3);
    sv.empty_row = ss.empty_row = {0};
    Eigen::VectorXd a = rng.gaussian(3).cwiseAbs().array() + 0.05;
    Eigen::VectorXd b = rng.gaussian(3).cwiseAbs().array() + 0.05;
    sv.values.row(0) = (a / a.sum()).transpose();
    ss.values.row(0) = (b / b.sum()).transpose();
    SimilarityMatrix mixed = mixture(sv, ss, {0.3, true});
    for (int c = 0; c < 3; ++c) {
        double lo = std::min(sv.values(0, c), ss.values(0, c));
        double hi = std::max(sv.values(0, c), ss.values(0, c));
        CHECK(mixed.values(0, c) >= lo - 1e-12);
        CHECK(mixed.values(0, c) <= hi + 1e-12);
    }
    CHECK(mixed.values.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixture falls back to the visual row when the intersection is empty") {
    SimilarityMatrix sv, ss;
    sv.rows = ss.rows = {"w"};
    sv.cols = ss.cols = {"a", "b"};
    sv.values.resize(1, 2);
    ss.values.resize(1, 2);
    sv.empty_row = ss.empty_row = {0};
    sv.values << 1.0, 0.0;
    ss.values << 0.0, 1.0;
    SimilarityMatrix mixed = mixture(sv, ss, {0.5, true});
    CHECK(mixed.values(0, 0) == 1.0);
    CHECK(mixed.values(0, 1) == 0.0);
}

TEST_CASE("mixture rejects mismatched index sets") {
    SimilarityMatrix sv, ss;
    sv.rows = {"w"};
    ss.rows = {"other"};
    sv.cols = ss.cols = {"a"};
    sv.values = Eigen::MatrixXd::Ones(1, 1);
    ss.values = Eigen::MatrixXd::Ones(1, 1);
    sv.empty_row = ss.empty_row = {0};
    CHECK_THROWS_AS(mixture(sv, ss, {0.5, true}), IndexMismatchError);
}

TEST_CASE("every similarity row sums to one or is flagged, on random inputs") {
    CategoryRegistry reg = testutil::small_registry(5, 3);
    Rng rng(23);
    std::vector<Eigen::VectorXd> vecs;
    for (int i = 0; i < 8; ++i) vecs.push_back(testutil::unit(rng, 6));
    EmbeddingTable emb = cat_embeddings(reg, vecs);
    for (const SimilarityMatrix& sim :
         {semantic_similarity_knn(emb, reg),
          semantic_similarity_sparse(emb, reg, {100.0, 5, 1e-4, 500})}) {
        CHECK_NOTHROW(sim.validate());
        for (long r = 0; r < sim.values.rows(); ++r) {
            if (sim.empty_row[size_t(r)]) CHECK(sim.values.row(r).sum() == 0.0);
            else CHECK(sim.values.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}
