// simxfer: turns image classifiers into object detectors for categories
// without box annotations, by transferring classifier->detector weight
// deltas across visually and semantically similar categories.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simxfer/adaptation.hpp"
#include "simxfer/bbox_regression.hpp"
#include "simxfer/errors.hpp"
#include "simxfer/evaluation.hpp"
#include "simxfer/log.hpp"
#include "simxfer/manifest.hpp"
#include "simxfer/model_store.hpp"
#include "simxfer/parallel.hpp"
#include "simxfer/similarity.hpp"
#include "simxfer/synth_bench.hpp"

using namespace simxfer;

namespace {

struct GlobalOpts {
    int threads = 0;
    bool plain = false;
};

std::map<std::string, std::vector<std::string>> load_extra_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    std::map<std::string, std::vector<std::string>> out;
    for (auto& [key, value] : doc.items())
        out[key] = value.get<std::vector<std::string>>();
    return out;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

// a manifest accompanies every run; --manifest-out only moves it
std::string manifest_path_or_default(const std::string& user, const std::string& out) {
    return user.empty() ? out + ".manifest.json" : user;
}

// ---------------------------------------------------------------------------
// similarity
// ---------------------------------------------------------------------------

struct SimilarityArgs {
    std::string method;
    std::string registry_path, scores_path, embeddings_path, classifier_path;
    std::string scheme = "weighted";
    int k = 0;
    double alpha = 0.6;
    double lambda = 100.0;
    int max_support = 20;
    int embedding_dim = 0;
    std::string extra_labels_path;
    std::string out_path;
    std::string manifest_path;
};

int run_similarity(const SimilarityArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    TruncationScheme scheme{a.scheme == "avg" ? TruncMode::Average : TruncMode::Weighted, a.k};
    PcmpConfig pcmp{a.lambda, std::min(a.max_support, registry.strong_count()), 1e-4, 500};

    auto category_embeddings = [&]() {
        require(!a.embeddings_path.empty(), "--embeddings is required for this method");
        EmbeddingTable tokens = load_embeddings(a.embeddings_path, a.embedding_dim);
        auto extra = a.extra_labels_path.empty()
                         ? std::map<std::string, std::vector<std::string>>{}
                         : load_extra_labels(a.extra_labels_path);
        return build_registry_embeddings(registry, tokens, extra);
    };

    SimilarityMatrix sim;
    if (a.method == "visual") {
        require(!a.scores_path.empty(), "--scores is required for --method visual");
        sim = visual_similarity(load_scores(a.scores_path), registry);
        if (a.k > 0) sim = truncate(sim, scheme);
    } else if (a.method == "semantic-knn") {
        sim = semantic_similarity_knn(category_embeddings(), registry);
        if (a.k > 0) sim = truncate(sim, scheme);
    } else if (a.method == "semantic-sparse") {
        sim = semantic_similarity_sparse(category_embeddings(), registry, pcmp);
    } else if (a.method == "lsda") {
        require(!a.classifier_path.empty(), "--classifier-head is required for --method lsda");
        require(a.k > 0, "--k is required for --method lsda");
        sim = lsda_baseline_similarity(load_head(a.classifier_path), registry, scheme);
    } else if (a.method == "mixture") {
        require(!a.scores_path.empty(), "--scores is required for --method mixture");
        SimilarityMatrix sv = visual_similarity(load_scores(a.scores_path), registry);
        SimilarityMatrix ss = semantic_similarity_sparse(category_embeddings(), registry, pcmp);
        sim = mixture(sv, ss, {a.alpha, true});
    } else {
        throw ConfigError("unknown --method '" + a.method + "'");
    }
    save_similarity(sim, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "similarity";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"method", a.method},        {"scheme", a.scheme},
                    {"k", std::to_string(a.k)},  {"alpha", fmt_g17(a.alpha)},
                    {"lambda", fmt_g17(a.lambda)}, {"max_support", std::to_string(a.max_support)},
                    {"out", a.out_path}};
        mf.add_input(a.registry_path);
        for (const std::string& p : {a.scores_path, a.embeddings_path, a.classifier_path,
                                     a.extra_labels_path})
            if (!p.empty()) mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

struct AdaptArgs {
    std::string registry_path, classifier_path, detector_path, similarity_path;
    std::string out_path, report_path, manifest_path;
};

int run_adapt(const AdaptArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    HeadMatrix classifier = load_head(a.classifier_path);
    HeadMatrix detector = load_head(a.detector_path);
    SimilarityMatrix sim = load_similarity(a.similarity_path);

    for (const std::string& col : sim.cols) {
        const CategoryEntry* e = registry.find(col);
        if (!e || e->split != Split::Strong)
            throw IndexMismatchError("similarity column '" + col +
                                     "' is not a strong category of the registry");
    }
    for (const std::string& row : sim.rows) {
        const CategoryEntry* e = registry.find(row);
        if (!e || e->split != Split::Weak)
            throw IndexMismatchError("similarity row '" + row +
                                     "' is not a weak category of the registry");
    }
    for (int id : registry.weak_ids())
        if (sim.find_row(registry.at(id).name) < 0)
            throw CoverageError("similarity matrix misses weak category '" +
                                registry.at(id).name + "'");

    HeadMatrix delta = compute_delta(classifier, detector, registry);
    AdaptationReport report;
    HeadMatrix adapted = adapt_head(classifier, delta, sim, &report);
    save_head(adapted, a.out_path, "detector-adapted");
    if (!a.report_path.empty()) report.save_json(a.report_path);

    {
        RunManifest mf;
        mf.subcommand = "adapt";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"out", a.out_path}};
        for (const std::string& p :
             {a.registry_path, a.classifier_path, a.detector_path, a.similarity_path})
            mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bboxreg
// ---------------------------------------------------------------------------

struct BboxArgs {
    std::string registry_path, proposals_path, groundtruth_path, regressors_path;
    std::string similarity_path, detections_path;
    double iou_min = 0.6;
    double lambda0 = 1000.0;
    bool strong_only = false;
    bool fill_identity = false;
    std::string out_path, manifest_path;
};

int run_bboxreg_train(const BboxArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    std::vector<ProposalRecord> proposals = load_proposals(a.proposals_path);
    GroundTruthSet gts = load_groundtruth(a.groundtruth_path);
    if (a.strong_only) {
        GroundTruthSet filtered;
        for (const auto& [image_id, insts] : gts.images)
            for (const GtInstance& g : insts)
                if (registry.is_strong(g.category)) filtered.add(image_id, g);
        gts = std::move(filtered);
    }
    auto pairs = select_pairs(proposals, gts, a.iou_min);
    std::map<int, BoxRegressor> regs = train_regressors(pairs, a.lambda0);
    if (a.fill_identity) {
        const int f = proposals.empty() ? 0 : int(proposals.front().feature.size());
        for (int id : registry.strong_ids()) {
            if (!regs.count(id)) {
                log_warn("no training pairs for '" + registry.at(id).name +
                         "', writing identity offsets");
                regs[id] = BoxRegressor::zero(id, f, a.lambda0);
            }
        }
    }
    save_regressors(regs, registry, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "bboxreg-train";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"iou_min", fmt_g17(a.iou_min)},
                    {"lambda0", fmt_g17(a.lambda0)},
                    {"strong_only", a.strong_only ? "true" : "false"},
                    {"out", a.out_path}};
        for (const std::string& p : {a.registry_path, a.proposals_path, a.groundtruth_path})
            mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

int run_bboxreg_transfer(const BboxArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    std::map<int, BoxRegressor> strong_regs = load_regressors(a.regressors_path, registry);
    SimilarityMatrix sim = load_similarity(a.similarity_path);
    std::map<int, BoxRegressor> weak = transfer_regressors(strong_regs, sim, registry);
    save_regressors(weak, registry, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "bboxreg-transfer";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"out", a.out_path}};
        for (const std::string& p : {a.registry_path, a.regressors_path, a.similarity_path})
            mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

int run_bboxreg_apply(const BboxArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    std::vector<Detection> dets = load_detections(a.detections_path);
    std::vector<ProposalRecord> proposals = load_proposals(a.proposals_path);
    std::map<int, BoxRegressor> regs = load_regressors(a.regressors_path, registry);
    std::vector<Eigen::VectorXd> feats = match_features(dets, proposals);
    std::vector<Detection> out = regress_detections(dets, feats, regs);
    save_detections(out, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "bboxreg-apply";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"out", a.out_path}};
        for (const std::string& p :
             {a.registry_path, a.detections_path, a.proposals_path, a.regressors_path})
            mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string registry_path, detections_path, groundtruth_path;
    double iou = 0.5;
    double nms_iou = 0.3;
    bool skip_nms = false;
    std::string out_path, manifest_path;
};

int run_eval(const EvalArgs& a) {
    CategoryRegistry registry = load_registry(a.registry_path);
    std::vector<Detection> dets = load_detections(a.detections_path);
    GroundTruthSet gts = load_groundtruth(a.groundtruth_path);
    if (!a.skip_nms) dets = nms(dets, a.nms_iou);
    EvalReport report = evaluate(dets, gts, registry, {a.iou, a.nms_iou});
    save_report_csv(report, registry, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "eval";
        mf.timestamp = utc_timestamp();
        mf.flags = {{"iou", fmt_g17(a.iou)},
                    {"nms_iou", fmt_g17(a.nms_iou)},
                    {"skip_nms", a.skip_nms ? "true" : "false"},
                    {"out", a.out_path}};
        for (const std::string& p : {a.registry_path, a.detections_path, a.groundtruth_path})
            mf.add_input(p);
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gen-world / bench
// ---------------------------------------------------------------------------

void add_world_flags(CLI::App* cmd, WorldConfig& wc) {
    cmd->add_option("--seed", wc.seed, "master seed");
    cmd->add_option("--categories", wc.total_categories, "total category count K");
    cmd->add_option("--strong", wc.strong_categories, "strong category count m");
    cmd->add_option("--feature-dim", wc.feature_dim, "classifier feature dimension D");
    cmd->add_option("--box-feature-dim", wc.box_feature_dim, "regression feature dimension F");
    cmd->add_option("--embedding-dim", wc.embedding_dim, "embedding dimension E");
    cmd->add_option("--clusters", wc.clusters, "latent similarity clusters");
    cmd->add_option("--images-per-category", wc.images_per_category, "images per category");
    cmd->add_option("--proposals-per-image", wc.proposals_per_image, "proposals per image");
    cmd->add_option("--feature-noise", wc.feature_noise, "feature noise sigma_f");
    cmd->add_option("--delta-noise", wc.delta_noise, "delta noise sigma_delta");
    cmd->add_option("--embedding-noise", wc.embedding_noise, "embedding noise sigma_e");
}

std::map<std::string, std::string> world_flag_map(const WorldConfig& wc) {
    return {{"seed", std::to_string(wc.seed)},
            {"categories", std::to_string(wc.total_categories)},
            {"strong", std::to_string(wc.strong_categories)},
            {"feature_dim", std::to_string(wc.feature_dim)},
            {"box_feature_dim", std::to_string(wc.box_feature_dim)},
            {"embedding_dim", std::to_string(wc.embedding_dim)},
            {"clusters", std::to_string(wc.clusters)},
            {"images_per_category", std::to_string(wc.images_per_category)},
            {"proposals_per_image", std::to_string(wc.proposals_per_image)},
            {"feature_noise", fmt_g17(wc.feature_noise)},
            {"delta_noise", fmt_g17(wc.delta_noise)},
            {"embedding_noise", fmt_g17(wc.embedding_noise)},
            {"prng", "mt19937_64+box-muller"}};
}

int run_gen_world(const WorldConfig& wc, const std::string& out_dir,
                  const std::string& manifest_path) {
    SyntheticWorld world = generate_world(wc);
    save_world(world, out_dir);
    {
        RunManifest mf;
        mf.subcommand = "gen-world";
        mf.timestamp = utc_timestamp();
        mf.seed = wc.seed;
        mf.flags = world_flag_map(wc);
        mf.flags["out_dir"] = out_dir;
        mf.save(manifest_path_or_default(manifest_path, out_dir + "/world"));
    }
    return 0;
}

struct BenchArgs {
    WorldConfig world;
    int seeds = 20;
    std::string methods_csv = "all";
    BenchConfig bench;
    std::string out_path, manifest_path;
};

int run_bench(const BenchArgs& a) {
    std::vector<Method> methods;
    if (a.methods_csv == "all") {
        methods = all_methods();
    } else {
        std::istringstream ss(a.methods_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            bool found = false;
            for (Method m : all_methods()) {
                if (method_name(m) == tok) {
                    methods.push_back(m);
                    found = true;
                }
            }
            require(found, "unknown method '" + tok + "'");
        }
        require(!methods.empty(), "--methods selected nothing");
    }
    require(a.seeds >= 1, "--seeds must be at least 1");

    std::vector<std::uint64_t> seeds(size_t(a.seeds));
    for (int i = 0; i < a.seeds; ++i) seeds[size_t(i)] = a.world.seed + std::uint64_t(i);

    std::vector<BenchmarkRow> rows = run_benchmark_seeds(a.world, seeds, methods, a.bench);
    save_benchmark_csv(rows, a.out_path);

    {
        RunManifest mf;
        mf.subcommand = "bench";
        mf.timestamp = utc_timestamp();
        mf.seed = a.world.seed;
        mf.flags = world_flag_map(a.world);
        mf.flags["seeds"] = std::to_string(a.seeds);
        mf.flags["methods"] = a.methods_csv;
        mf.flags["lsda_k"] = std::to_string(a.bench.lsda_k);
        mf.flags["alpha"] = fmt_g17(a.bench.alpha);
        mf.flags["lambda"] = fmt_g17(a.bench.pcmp.lambda);
        mf.flags["max_support"] = std::to_string(a.bench.pcmp.max_support);
        mf.flags["lambda0"] = fmt_g17(a.bench.lambda0);
        mf.flags["iou"] = fmt_g17(a.bench.eval.iou_threshold);
        mf.flags["nms_iou"] = fmt_g17(a.bench.eval.nms_iou);
        mf.flags["out"] = a.out_path;
        mf.save(manifest_path_or_default(a.manifest_path, a.out_path));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"classifier-to-detector transfer via category similarity"};
    app.require_subcommand(1);

    GlobalOpts global;
    app.add_option("--threads", global.threads, "cap worker threads (default: all cores)");
    app.add_flag("--plain", global.plain, "plain diagnostics, no styling");

    SimilarityArgs sim_args;
    CLI::App* sim = app.add_subcommand("similarity", "compute a weak-by-strong similarity matrix");
    sim->add_option("--method", sim_args.method,
                    "visual | semantic-knn | semantic-sparse | lsda | mixture")
        ->required();
    sim->add_option("--registry", sim_args.registry_path, "registry.json")->required();
    sim->add_option("--scores", sim_args.scores_path, "scores.csv (visual, mixture)");
    sim->add_option("--embeddings", sim_args.embeddings_path, "embeddings.txt (semantic, mixture)");
    sim->add_option("--classifier-head", sim_args.classifier_path, "classifier matrix (lsda)");
    sim->add_option("--scheme", sim_args.scheme, "avg | weighted (default weighted)");
    sim->add_option("--k", sim_args.k, "neighbor count; 0 keeps dense rows");
    sim->add_option("--alpha", sim_args.alpha, "visual weight in the mixture (default 0.6)");
    sim->add_option("--lambda", sim_args.lambda, "sparse reconstruction penalty (default 100)");
    sim->add_option("--max-support", sim_args.max_support, "sparse support cap (default 20)");
    sim->add_option("--embedding-dim", sim_args.embedding_dim, "expected embedding dimension");
    sim->add_option("--extra-labels", sim_args.extra_labels_path,
                    "JSON map of category name to extra labels");
    sim->add_option("--out", sim_args.out_path, "output similarity.csv")->required();
    sim->add_option("--manifest-out", sim_args.manifest_path, "run manifest JSON");

    AdaptArgs adapt_args;
    CLI::App* adapt = app.add_subcommand("adapt", "adapt weak classifier rows into detector rows");
    adapt->add_option("--registry", adapt_args.registry_path)->required();
    adapt->add_option("--classifier-head", adapt_args.classifier_path)->required();
    adapt->add_option("--detector-head", adapt_args.detector_path)->required();
    adapt->add_option("--similarity", adapt_args.similarity_path)->required();
    adapt->add_option("--out", adapt_args.out_path, "adapted weak rows")->required();
    adapt->add_option("--report", adapt_args.report_path, "adaptation report JSON");
    adapt->add_option("--manifest-out", adapt_args.manifest_path);

    BboxArgs bbox_args;
    CLI::App* bbox = app.add_subcommand("bboxreg", "bounding-box regressor stages");
    bbox->require_subcommand(1);
    CLI::App* bb_train = bbox->add_subcommand("train", "ridge-train per-category regressors");
    bb_train->add_option("--registry", bbox_args.registry_path)->required();
    bb_train->add_option("--proposals", bbox_args.proposals_path)->required();
    bb_train->add_option("--groundtruth", bbox_args.groundtruth_path)->required();
    bb_train->add_option("--iou-min", bbox_args.iou_min, "pair selection threshold (default 0.6)");
    bb_train->add_option("--lambda0", bbox_args.lambda0, "ridge strength (default 1000)");
    bb_train->add_flag("--strong-only", bbox_args.strong_only,
                       "train only on strong-category ground truth");
    bb_train->add_flag("--fill-identity", bbox_args.fill_identity,
                       "emit identity regressors for strong categories with no pairs");
    bb_train->add_option("--out", bbox_args.out_path)->required();
    bb_train->add_option("--manifest-out", bbox_args.manifest_path);
    CLI::App* bb_transfer = bbox->add_subcommand("transfer", "transfer regressors to weak categories");
    bb_transfer->add_option("--registry", bbox_args.registry_path)->required();
    bb_transfer->add_option("--regressors", bbox_args.regressors_path)->required();
    bb_transfer->add_option("--similarity", bbox_args.similarity_path)->required();
    bb_transfer->add_option("--out", bbox_args.out_path)->required();
    bb_transfer->add_option("--manifest-out", bbox_args.manifest_path);
    CLI::App* bb_apply = bbox->add_subcommand("apply", "regress detection boxes");
    bb_apply->add_option("--registry", bbox_args.registry_path)->required();
    bb_apply->add_option("--detections", bbox_args.detections_path)->required();
    bb_apply->add_option("--proposals", bbox_args.proposals_path)->required();
    bb_apply->add_option("--regressors", bbox_args.regressors_path)->required();
    bb_apply->add_option("--out", bbox_args.out_path)->required();
    bb_apply->add_option("--manifest-out", bbox_args.manifest_path);

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "detection evaluation: IoU, NMS, AP, mAP");
    ev->add_option("--registry", eval_args.registry_path)->required();
    ev->add_option("--detections", eval_args.detections_path)->required();
    ev->add_option("--groundtruth", eval_args.groundtruth_path)->required();
    ev->add_option("--iou", eval_args.iou, "matching threshold (default 0.5)");
    ev->add_option("--nms-iou", eval_args.nms_iou, "suppression threshold (default 0.3)");
    ev->add_flag("--skip-nms", eval_args.skip_nms, "evaluate detections as given");
    ev->add_option("--out", eval_args.out_path, "report.csv")->required();
    ev->add_option("--manifest-out", eval_args.manifest_path);

    WorldConfig gen_cfg;
    std::string gen_out_dir, gen_manifest;
    CLI::App* gen = app.add_subcommand("gen-world", "generate a synthetic transfer problem");
    add_world_flags(gen, gen_cfg);
    gen->add_option("--out-dir", gen_out_dir, "output directory")->required();
    gen->add_option("--manifest-out", gen_manifest);

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "run the method-ordering benchmark");
    add_world_flags(bench, bench_args.world);
    bench->add_option("--seeds", bench_args.seeds, "number of consecutive seeds (default 20)");
    bench->add_option("--methods", bench_args.methods_csv, "comma list or 'all'");
    bench->add_option("--lsda-k", bench_args.bench.lsda_k, "neighbors for the lsda baseline");
    bench->add_option("--alpha", bench_args.bench.alpha, "mixture visual weight");
    bench->add_option("--lambda", bench_args.bench.pcmp.lambda, "sparse penalty");
    bench->add_option("--max-support", bench_args.bench.pcmp.max_support, "sparse support cap");
    bench->add_option("--lambda0", bench_args.bench.lambda0, "ridge strength");
    bench->add_option("--iou", bench_args.bench.eval.iou_threshold, "eval IoU threshold");
    bench->add_option("--nms-iou", bench_args.bench.eval.nms_iou, "NMS threshold");
    bench->add_option("--out", bench_args.out_path, "benchmark.csv")->required();
    bench->add_option("--manifest-out", bench_args.manifest_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    set_threads(global.threads);

    try {
        if (sim->parsed()) return run_similarity(sim_args);
        if (adapt->parsed()) return run_adapt(adapt_args);
        if (bbox->parsed()) {
            if (bbox->get_subcommand("train")->parsed()) return run_bboxreg_train(bbox_args);
            if (bbox->get_subcommand("transfer")->parsed()) return run_bboxreg_transfer(bbox_args);
            return run_bboxreg_apply(bbox_args);
        }
        if (ev->parsed()) return run_eval(eval_args);
        if (gen->parsed()) return run_gen_world(gen_cfg, gen_out_dir, gen_manifest);
        if (bench->parsed()) return run_bench(bench_args);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
