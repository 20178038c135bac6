#include <algorithm>
#include <chrono>
#include <cmath>

#include "redbench/digest.hpp"
#include "redbench/errors.hpp"
#include "redbench/harness/detection.hpp"
#include "redbench/harness/suite.hpp"
#include "redbench/log.hpp"
#include "redbench/rng.hpp"

namespace redbench::harness {

namespace {

void validate_suite(const ExperimentSuite& suite) {
    const int K = suite.dataset.num_classes;
    if (suite.groups.empty() && suite.clean_models < 1)
        throw InputError("suite has neither attack groups nor clean controls");
    for (const auto& g : suite.groups) {
        if (g.source_count < 1 || g.source_count > K - 1)
            throw InputError("group '" + g.name + "': source count must lie in [1, K-1]");
        if (g.models < 1) throw InputError("group '" + g.name + "': needs at least one model");
        if (g.poison_per_source < 1 || g.poison_per_source > suite.dataset.train_per_class)
            throw InputError("group '" + g.name + "': poison count out of range");
        if (!(g.magnitude > 0.0)) throw InputError("group '" + g.name + "': bad magnitude");
    }
    if (suite.detection.images_per_class < 1 || suite.detection.data_limited_images < 1)
        throw InputError("detection needs at least one image per class");
    for (const auto& m : suite.methods) {
        algorithm_for_method(m.method);  // validates the name
        for (const auto& gname : m.groups) {
            const bool known = std::any_of(suite.groups.begin(), suite.groups.end(),
                                           [&](const auto& g) { return g.name == gname; });
            if (!known)
                throw InputError("method '" + m.method + "' references unknown group '" + gname +
                                 "'");
        }
    }
}

struct TrainedModel {
    ModelSummary summary;
    micronet::ClassifierModel model;
    bool usable = false;
};

std::string two_digit(int v) {
    return (v < 10 ? "0" : "") + std::to_string(v);
}

int method_images(const ExperimentSuite& suite, const MethodConfig& m) {
    if (m.images_per_class > 0) return m.images_per_class;
    if (m.method == "lred-data-limited") return suite.detection.data_limited_images;
    return suite.detection.images_per_class;
}

}  // namespace

SuiteReport run_suite(const ExperimentSuite& suite) {
    validate_suite(suite);
    const auto suite_start = std::chrono::steady_clock::now();
    const int K = suite.dataset.num_classes;

    SuiteReport report;
    report.config = suite;

    logging::info("generating dataset (%d classes)", K);
    auto [train_set, test_set] = synth_dataset(suite.dataset);

    const std::vector<micronet::LayerSpec> arch =
        micronet::make_architecture(suite.arch, suite.dataset.image_shape, K);

    // Train every model up front; detection methods reuse them.
    std::vector<TrainedModel> trained;
    std::vector<attacks::AttackSpec> specs;  // aligned with trained, empty pattern for clean
    int global_index = 0;
    for (const auto& group : suite.groups) {
        for (int m = 0; m < group.models; ++m, ++global_index) {
            TrainedModel tm;
            tm.summary.model_id = group.name + "-" + two_digit(m);
            tm.summary.group = group.name;
            tm.summary.attacked = true;
            attacks::AttackSpec spec;
            try {
                Rng pick(derive_seed(suite.seed, "attack", static_cast<std::uint64_t>(global_index)));
                const int target = pick.below_int(K);
                std::vector<int> others;
                for (int c = 0; c < K; ++c)
                    if (c != target) others.push_back(c);
                std::vector<int> sources;
                for (std::size_t idx :
                     pick.sample_without_replacement(others.size(),
                                                     static_cast<std::size_t>(group.source_count)))
                    sources.push_back(others[idx]);

                attacks::BackdoorPattern pattern;
                const std::uint64_t pattern_seed =
                    derive_seed(suite.seed, "pattern", static_cast<std::uint64_t>(global_index));
                switch (group.pattern_kind) {
                    case attacks::PatternKind::kGlobalAlternating:
                        pattern = attacks::make_global_pattern(suite.dataset.image_shape,
                                                               group.magnitude, pattern_seed);
                        break;
                    case attacks::PatternKind::kLocalSquare:
                        pattern = attacks::make_local_square_pattern(
                            suite.dataset.image_shape, group.magnitude, pattern_seed);
                        break;
                    case attacks::PatternKind::kChessboardPatch:
                        pattern = attacks::make_chessboard_pattern(
                            suite.dataset.image_shape, group.magnitude, group.patch_size);
                        break;
                    case attacks::PatternKind::kSinglePixel:
                        pattern = attacks::make_single_pixel_pattern(suite.dataset.image_shape,
                                                                     group.magnitude);
                        break;
                    default:
                        throw InputError("group '" + group.name + "': unsupported pattern kind");
                }
                spec = attacks::make_attack_spec(
                    sources, target, std::move(pattern), group.poison_per_source,
                    derive_seed(suite.seed, "poison", static_cast<std::uint64_t>(global_index)));

                tm.summary.true_target = spec.target_class;
                tm.summary.source_classes = spec.source_classes;
                tm.summary.pattern_kind = attacks::pattern_kind_name(spec.pattern.kind);
                tm.summary.magnitude = spec.pattern.magnitude;
                tm.summary.poison_per_source = spec.poison_per_source;

                const auto t0 = std::chrono::steady_clock::now();
                attacks::PoisonedDataset poisoned = attacks::poison_dataset(train_set, spec);
                micronet::TrainConfig tc = suite.train;
                tc.seed = derive_seed(suite.seed, "train", static_cast<std::uint64_t>(global_index));
                tm.model = micronet::ClassifierModel(suite.dataset.image_shape, arch);
                const micronet::TrainStats stats =
                    micronet::train_classifier(tm.model, poisoned.combined, tc);
                tm.summary.train_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                tm.summary.train_accuracy = stats.train_accuracy;
                tm.summary.asr = attacks::attack_success_rate(tm.model, test_set, spec);
                tm.summary.cta = micronet::evaluate_accuracy(tm.model, test_set);
                tm.usable = true;
                logging::info("%s: ASR %.3f CTA %.3f (t*=%d)", tm.summary.model_id.c_str(),
                              tm.summary.asr, tm.summary.cta, tm.summary.true_target);
            } catch (const std::exception& e) {
                tm.summary.failed = true;
                tm.summary.diagnostic = e.what();
                logging::error("%s failed: %s", tm.summary.model_id.c_str(), e.what());
            }
            specs.push_back(std::move(spec));
            trained.push_back(std::move(tm));
        }
    }
    for (int m = 0; m < suite.clean_models; ++m, ++global_index) {
        TrainedModel tm;
        tm.summary.model_id = "clean-" + two_digit(m);
        tm.summary.group = "clean";
        try {
            const auto t0 = std::chrono::steady_clock::now();
            micronet::TrainConfig tc = suite.train;
            tc.seed = derive_seed(suite.seed, "train", static_cast<std::uint64_t>(global_index));
            tm.model = micronet::ClassifierModel(suite.dataset.image_shape, arch);
            const micronet::TrainStats stats = micronet::train_classifier(tm.model, train_set, tc);
            tm.summary.train_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            tm.summary.train_accuracy = stats.train_accuracy;
            tm.summary.cta = micronet::evaluate_accuracy(tm.model, test_set);
            tm.usable = true;
            logging::info("%s: CTA %.3f", tm.summary.model_id.c_str(), tm.summary.cta);
        } catch (const std::exception& e) {
            tm.summary.failed = true;
            tm.summary.diagnostic = e.what();
            logging::error("%s failed: %s", tm.summary.model_id.c_str(), e.what());
        }
        specs.emplace_back();
        trained.push_back(std::move(tm));
    }

    double clean_sum = 0.0;
    int clean_count = 0;
    for (const auto& tm : trained) {
        if (tm.summary.group == "clean" && tm.usable) {
            clean_sum += tm.summary.cta;
            ++clean_count;
        }
    }
    if (clean_count > 0) report.clean_cta_mean = clean_sum / clean_count;
    for (const auto& tm : trained) report.models.push_back(tm.summary);

    // Detection rows.
    for (const auto& method : suite.methods) {
        const int images = method_images(suite, method);
        auto runs_on_group = [&](const std::string& gname) {
            return method.groups.empty() ||
                   std::find(method.groups.begin(), method.groups.end(), gname) !=
                       method.groups.end();
        };
        std::vector<int> group_position(trained.size(), 0);
        {
            int pos = 0;
            std::string last;
            for (std::size_t i = 0; i < trained.size(); ++i) {
                if (trained[i].summary.group != last) {
                    last = trained[i].summary.group;
                    pos = 0;
                }
                group_position[i] = pos++;
            }
        }
        for (std::size_t i = 0; i < trained.size(); ++i) {
            const TrainedModel& tm = trained[i];
            const bool is_clean = tm.summary.group == "clean";
            if (is_clean) {
                const int limit = method.clean_models;
                if (limit == 0) continue;
                if (limit > 0 && group_position[i] >= limit) continue;
            } else {
                if (!runs_on_group(tm.summary.group)) continue;
                if (method.models_per_group > 0 && group_position[i] >= method.models_per_group)
                    continue;
            }

            SuiteRow row;
            row.model_id = tm.summary.model_id;
            row.group = tm.summary.group;
            row.method = method.method;
            row.attacked = tm.summary.attacked;
            row.asr = tm.summary.asr;
            row.cta = tm.summary.cta;
            row.true_target = tm.summary.true_target;
            if (tm.summary.failed) {
                row.failed = true;
                row.diagnostic = "model unavailable: " + tm.summary.diagnostic;
                report.rows.push_back(std::move(row));
                continue;
            }
            try {
                DetectionOptions opts;
                opts.method = method.method;
                opts.phi = suite.detection.phi;
                opts.images_per_class = images;
                opts.estimation.target_fraction = suite.detection.pi;
                opts.estimation.step_size = suite.detection.delta;
                opts.estimation.max_iterations = suite.detection.tau_max;
                opts.estimation.seed = derive_seed(
                    derive_seed(suite.seed, "estimate", static_cast<std::uint64_t>(i)),
                    method.method, static_cast<std::uint64_t>(images));
                opts.sample_seed = derive_seed(
                    derive_seed(suite.seed, "detect-sample", static_cast<std::uint64_t>(i)), "n",
                    static_cast<std::uint64_t>(images));

                DetectionRun run = run_detection(tm.model, test_set, opts);
                row.pv = run.report.pv;
                row.underflow = run.report.underflow;
                row.degenerate_fit = run.report.degenerate_fit;
                row.attack_detected = run.report.attack;
                row.inferred_target =
                    run.report.inferred_target ? *run.report.inferred_target : -1;
                if (run.report.fit) {
                    row.alpha = run.report.fit->alpha;
                    row.scale = run.report.fit->scale;
                }
                row.norms = run.norms;
                row.r = run.report.statistics.r;
                for (const auto& res : run.per_target) {
                    row.iterations.push_back(res.iterations);
                    row.converged.push_back(res.converged ? 1 : 0);
                }
                row.screened_out = run.screened_out;
                row.invariants_ok = run.invariants_ok;
                row.detect_seconds = run.seconds;
                row.inferred_pattern = run.per_target[run.report.statistics.max_index].pattern;
                if (row.attacked)
                    row.true_target_weights = run.per_target[row.true_target].weights;
                row.correct = row.attacked
                                  ? (row.attack_detected && row.inferred_target == row.true_target)
                                  : !row.attack_detected;
                logging::info("%s %s: pv %.4g -> %s", row.model_id.c_str(), row.method.c_str(),
                              row.pv, row.attack_detected ? "attack" : "clean");
            } catch (const std::exception& e) {
                row.failed = true;
                row.diagnostic = e.what();
                logging::error("%s %s failed: %s", row.model_id.c_str(), row.method.c_str(),
                               e.what());
            }
            report.rows.push_back(std::move(row));
        }
    }

    // Per-(method, group) success tallies, Table-2 style.
    for (const auto& method : suite.methods) {
        std::vector<std::string> group_names;
        for (const auto& row : report.rows) {
            if (row.method != method.method) continue;
            if (std::find(group_names.begin(), group_names.end(), row.group) ==
                group_names.end())
                group_names.push_back(row.group);
        }
        for (const auto& gname : group_names) {
            GroupScore score;
            score.method = method.method;
            score.group = gname;
            for (const auto& row : report.rows) {
                if (row.method != method.method || row.group != gname) continue;
                ++score.models;
                if (!row.failed && row.correct) ++score.successes;
            }
            report.scores.push_back(std::move(score));
        }
    }

    // Weight concentration on attacked rows of annealed methods.
    for (const auto& method : suite.methods) {
        if (algorithm_for_method(method.method) != Algorithm::kLred) continue;
        std::vector<std::string> group_names;
        for (const auto& g : suite.groups)
            if (std::any_of(report.rows.begin(), report.rows.end(), [&](const SuiteRow& r) {
                    return r.method == method.method && r.group == g.name && !r.failed;
                }))
                group_names.push_back(g.name);
        for (const auto& gname : group_names) {
            WeightConcentrationGroup wg;
            wg.method = method.method;
            wg.group = gname;
            for (const auto& row : report.rows) {
                if (row.method != method.method || row.group != gname || row.failed) continue;
                if (row.true_target_weights.empty()) continue;
                const auto& summary = *std::find_if(
                    report.models.begin(), report.models.end(),
                    [&](const ModelSummary& m) { return m.model_id == row.model_id; });
                WeightConcentrationEntry entry;
                entry.model_id = row.model_id;
                double src = 0.0, non = 0.0;
                int non_count = 0;
                for (int c = 0; c < K; ++c) {
                    if (c == row.true_target) continue;
                    const bool is_source =
                        std::binary_search(summary.source_classes.begin(),
                                           summary.source_classes.end(), c);
                    if (is_source)
                        src += row.true_target_weights[c];
                    else {
                        non += row.true_target_weights[c];
                        ++non_count;
                    }
                }
                entry.source_mean = src / static_cast<double>(summary.source_classes.size());
                entry.non_source_mean = non_count > 0 ? non / non_count : 0.0;
                if (entry.source_mean > entry.non_source_mean) ++wg.dominance_count;
                wg.entries.push_back(std::move(entry));
            }
            if (!wg.entries.empty()) report.weight_concentration.push_back(std::move(wg));
        }
    }

    // Fingerprint of everything the seeds determine; wall-clock stays out.
    {
        Fnv1a64 h;
        h.update("suite:" + suite.name + ":" + std::to_string(suite.seed) + "\n");
        auto hash_dataset = [&h](const LabeledDataset& ds) {
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const auto& item = ds[i];
                const auto label = static_cast<std::uint32_t>(item.label);
                h.update(&label, sizeof label);
                for (double v : item.image.values()) {
                    const auto b = static_cast<std::uint8_t>(std::nearbyint(v * 255.0));
                    h.update(&b, 1);
                }
            }
        };
        hash_dataset(train_set);
        hash_dataset(test_set);
        for (std::size_t i = 0; i < trained.size(); ++i) {
            const ModelSummary& m = trained[i].summary;
            h.update("model:" + m.model_id + ":" + m.group + ":" + format_g17(m.asr) + ":" +
                     format_g17(m.cta) + ":" + format_g17(m.train_accuracy) + ":" +
                     std::to_string(m.true_target) + ":");
            for (int s : m.source_classes) h.update(std::to_string(s) + ",");
            if (trained[i].usable)
                for (const auto& layer : trained[i].model.params())
                    h.update(layer.data(), layer.size() * sizeof(float));
            h.update("\n");
        }
        for (const SuiteRow& row : report.rows) {
            h.update("row:" + row.model_id + ":" + row.method + ":" + format_g17(row.pv) + ":" +
                     (row.attack_detected ? "1" : "0") + ":" +
                     std::to_string(row.inferred_target) + ":" +
                     std::to_string(row.screened_out) + ":" + (row.failed ? "1" : "0") + ":" +
                     (row.invariants_ok ? "1" : "0") + ":");
            for (double n : row.norms) h.update(format_g17(n) + ",");
            for (double w : row.true_target_weights) h.update(format_g17(w) + ",");
            for (int it : row.iterations) h.update(std::to_string(it) + ",");
            h.update("\n");
        }
        report.digest = h.hex();
    }

    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - suite_start).count();

    if (!suite.emit_timings) {
        for (auto& m : report.models) m.train_seconds = 0.0;
        for (auto& r : report.rows) r.detect_seconds = 0.0;
        report.total_seconds = 0.0;
    }
    return report;
}

}  // namespace redbench::harness
