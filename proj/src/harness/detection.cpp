#include "redbench/harness/detection.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "redbench/errors.hpp"
#include "redbench/log.hpp"
#include "redbench/rng.hpp"

namespace redbench::harness {

Algorithm algorithm_for_method(const std::string& method) {
    if (method == "lred" || method == "lred-data-limited") return Algorithm::kLred;
    if (method == "ured") return Algorithm::kUred;
    if (method == "pred") return Algorithm::kPred;
    throw InputError("unknown detection method '" + method + "'");
}

std::pair<red::ClassSets, int> sample_detection_sets(const micronet::ClassifierModel& model,
                                                     const LabeledDataset& pool,
                                                     int images_per_class, std::uint64_t seed) {
    if (images_per_class < 1) throw InputError("need at least one detection image per class");
    if (pool.num_classes() != model.num_classes())
        throw InputError("detection pool class count does not match the model");
    red::ClassSets sets(static_cast<std::size_t>(pool.num_classes()));
    int skipped = 0;
    for (int c = 0; c < pool.num_classes(); ++c) {
        std::vector<std::size_t> order = pool.class_indices(c);
        Rng rng(derive_seed(seed, "sample", static_cast<std::uint64_t>(c)));
        rng.shuffle(order);
        for (std::size_t idx : order) {
            if (static_cast<int>(sets[c].size()) >= images_per_class) break;
            if (micronet::classify(model, pool[idx].image) == c)
                sets[c].push_back(pool[idx].image);
            else
                ++skipped;
        }
        if (sets[c].empty())
            throw InputError("class " + std::to_string(c) +
                             " has no correctly classified images in the detection pool");
        if (static_cast<int>(sets[c].size()) < images_per_class)
            logging::warn("class %d: only %zu of %d detection images available", c,
                          sets[c].size(), images_per_class);
    }
    if (skipped > 0)
        logging::info("detection sampling skipped %d misclassified image(s)", skipped);
    return {std::move(sets), skipped};
}

namespace {

bool result_invariants_hold(const red::EstimationResult& res, const red::EstimationParams& p) {
    if (static_cast<int>(res.trace.size()) != res.iterations) return false;
    if (res.converged) {
        if (res.trace.empty()) return false;
        if (!(res.trace.back().objective >= p.target_fraction)) return false;
    }
    const double norm = l2_norm(res.pattern);
    if (!std::isfinite(norm)) return false;
    for (const auto& entry : res.trace) {
        if (!std::isfinite(entry.objective) || entry.objective < 0.0 || entry.objective > 1.0)
            return false;
        if (!std::isnan(entry.temperature) && !(entry.temperature > 0.0)) return false;
    }
    return true;
}

}  // namespace

DetectionRun run_detection(const micronet::ClassifierModel& model, const LabeledDataset& pool,
                           const DetectionOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    const Algorithm algo = algorithm_for_method(options.method);
    const int K = model.num_classes();
    if (K < 3) throw InputError("detection needs at least 3 classes");

    DetectionRun run;
    auto [sets, skipped] =
        sample_detection_sets(model, pool, options.images_per_class, options.sample_seed);
    run.screened_out = skipped;

    run.per_target.reserve(static_cast<std::size_t>(K));
    run.norms.reserve(static_cast<std::size_t>(K));
    for (int t = 0; t < K; ++t) {
        red::EstimationParams params = options.estimation;
        params.seed = derive_seed(options.estimation.seed, "target", static_cast<std::uint64_t>(t));
        red::EstimationResult best;
        if (algo == Algorithm::kLred) {
            best = red::estimate_pattern_lred(model, sets, t, params);
        } else if (algo == Algorithm::kUred) {
            best = red::estimate_pattern_ured(model, sets, t, params);
        } else {
            // Per-pair estimation: the target's statistic is the smallest
            // norm over its candidate source classes.
            double best_norm = std::numeric_limits<double>::infinity();
            for (int s = 0; s < K; ++s) {
                if (s == t) continue;
                red::EstimationParams pair_params = params;
                pair_params.seed = derive_seed(params.seed, "source", static_cast<std::uint64_t>(s));
                red::EstimationResult res =
                    red::estimate_pattern_pred(model, sets[s], s, t, pair_params);
                const double norm = l2_norm(res.pattern);
                if (norm < best_norm) {
                    best_norm = norm;
                    best = std::move(res);
                }
            }
        }
        if (!result_invariants_hold(best, params)) run.invariants_ok = false;
        run.norms.push_back(l2_norm(best.pattern));
        run.per_target.push_back(std::move(best));
    }

    run.report = anomaly::analyze(run.norms, options.phi);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

}  // namespace redbench::harness
