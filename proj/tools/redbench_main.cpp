// Command-line front end. Subcommands cover the full pipeline: synthesize
// data, craft a poisoned training set, train, evaluate, run reverse-
// engineering detection on one model, run a whole experiment suite, and
// export an estimated pattern as a viewable image.
//
// Exit codes: 0 success, 1 detection-positive (detect only), 2 any error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "redbench/anomaly/anomaly.hpp"
#include "redbench/attacks/attacks.hpp"
#include "redbench/errors.hpp"
#include "redbench/harness/attack_spec_file.hpp"
#include "redbench/harness/dataset_io.hpp"
#include "redbench/harness/detection.hpp"
#include "redbench/harness/pattern_image.hpp"
#include "redbench/harness/suite.hpp"
#include "redbench/harness/synth.hpp"
#include "redbench/log.hpp"
#include "redbench/micronet/model.hpp"
#include "redbench/micronet/serialize.hpp"
#include "redbench/micronet/train.hpp"
#include "redbench/rng.hpp"

namespace {

using namespace redbench;
using ordered_json = nlohmann::ordered_json;

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write to " + path.string());
}

LabeledDataset load_split(const std::filesystem::path& dir, const char* name) {
    return harness::load_dataset(dir / name);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    harness::DatasetConfig cfg =
        harness::parse_dataset_json(slurp(config_path), config_path);
    auto [train, test] = harness::synth_dataset(cfg);
    std::filesystem::create_directories(out_dir);
    harness::save_dataset(train, std::filesystem::path(out_dir) / "train.lrds");
    harness::save_dataset(test, std::filesystem::path(out_dir) / "test.lrds");
    std::printf("train.lrds: %zu items, test.lrds: %zu items, %d classes\n", train.size(),
                test.size(), cfg.num_classes);
    return 0;
}

int cmd_craft(const std::string& spec_path, const std::string& train_dir,
              const std::string& out_dir) {
    harness::AttackFileSpec file_spec = harness::load_attack_spec(spec_path);
    LabeledDataset clean_train = load_split(train_dir, "train.lrds");
    attacks::AttackSpec spec = file_spec.instantiate(clean_train.image_shape());
    attacks::PoisonedDataset poisoned = attacks::poison_dataset(clean_train, spec);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);
    // Same filename as gen-data so the result feeds straight into `train`.
    harness::save_dataset(poisoned.combined, out / "train.lrds");

    LabeledDataset removed(clean_train.num_classes(), clean_train.image_shape());
    for (const auto& item : poisoned.removed_originals) removed.add(item.image, item.label);
    harness::save_dataset(removed, out / "removed.lrds");
    micronet::save_tensor(spec.pattern.perturbation, out / "pattern.lrtn");

    std::size_t poisoned_count = 0;
    for (auto p : poisoned.provenance)
        if (p == attacks::Provenance::kBackdoor) ++poisoned_count;

    ordered_json j;
    j["sources"] = spec.source_classes;
    j["target"] = spec.target_class;
    j["kind"] = attacks::pattern_kind_name(spec.pattern.kind);
    j["magnitude"] = spec.pattern.magnitude;
    j["poison_per_source"] = spec.poison_per_source;
    j["seed"] = spec.seed;
    j["pattern_norm"] = l2_norm(spec.pattern.perturbation);
    j["pattern_l0"] = l0_count(spec.pattern.perturbation);
    j["poisoned_items"] = poisoned_count;
    j["dataset_size"] = poisoned.combined.size();
    spit(out / "attack.json", j.dump(2) + "\n");

    std::printf("poisoned %zu items (%zu sources x %d), dataset size %zu\n", poisoned_count,
                spec.source_classes.size(), spec.poison_per_source, poisoned.combined.size());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& arch_name,
              const std::string& train_config_path, const std::string& out_path) {
    LabeledDataset train = load_split(data_dir, "train.lrds");
    micronet::TrainConfig config;
    if (!train_config_path.empty())
        config = harness::parse_train_json(slurp(train_config_path), train_config_path);

    micronet::ClassifierModel model(
        train.image_shape(),
        micronet::make_architecture(arch_name, train.image_shape(), train.num_classes()));
    const auto t0 = std::chrono::steady_clock::now();
    micronet::TrainStats stats = micronet::train_classifier(model, train, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    micronet::save_model(model, out_path);
    std::printf("arch %s, %zu params, final epoch loss %.4f, train accuracy %.4f, %.1fs\n",
                arch_name.c_str(), model.total_param_count(), stats.final_epoch_loss,
                stats.train_accuracy, seconds);
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_dir,
             const std::string& spec_path) {
    micronet::ClassifierModel model = micronet::load_model(model_path);
    LabeledDataset test = load_split(test_dir, "test.lrds");
    std::printf("cta %.4f\n", micronet::evaluate_accuracy(model, test));

    if (!spec_path.empty()) {
        attacks::AttackSpec spec =
            harness::load_attack_spec(spec_path).instantiate(test.image_shape());
        std::printf("asr %.4f\n", attacks::attack_success_rate(model, test, spec));
        attacks::CollateralDamage col = attacks::collateral_damage_profile(model, test, spec);
        for (std::size_t c = 0; c < col.flip_rate_to_target.size(); ++c)
            if (col.flip_rate_to_target[c])
                std::printf("collateral class %zu: %.4f\n", c, *col.flip_rate_to_target[c]);
    }
    return 0;
}

ordered_json pattern_json(const Tensor& pattern) {
    ordered_json j;
    j["channels"] = pattern.shape().channels;
    j["height"] = pattern.shape().height;
    j["width"] = pattern.shape().width;
    j["values"] = pattern.values();
    return j;
}

Tensor pattern_from_json(const ordered_json& j, const std::string& origin) {
    Shape shape{j.at("channels").get<int>(), j.at("height").get<int>(), j.at("width").get<int>()};
    std::vector<double> values = j.at("values").get<std::vector<double>>();
    Tensor t(shape);
    if (values.size() != t.size())
        throw FormatError(origin + ": pattern value count does not match shape");
    t.values() = std::move(values);
    return t;
}

int cmd_detect(const std::string& model_path, const std::string& clean_dir,
               const std::string& method, double pi, double delta, double phi, int tau_max,
               int images_per_class, std::uint64_t seed, const std::string& out_path) {
    micronet::ClassifierModel model = micronet::load_model(model_path);
    LabeledDataset pool = load_split(clean_dir, "test.lrds");

    harness::DetectionOptions options;
    options.method = method;
    options.phi = phi;
    options.images_per_class = images_per_class;
    options.estimation.target_fraction = pi;
    options.estimation.step_size = delta;
    options.estimation.max_iterations = tau_max;
    options.estimation.seed = seed;
    options.sample_seed = derive_seed(seed, "detect-sample");
    harness::DetectionRun run = harness::run_detection(model, pool, options);

    const std::filesystem::path report_path(out_path);
    if (report_path.has_parent_path())
        std::filesystem::create_directories(report_path.parent_path());
    const std::string stem = report_path.stem().string();
    const std::filesystem::path dir =
        report_path.has_parent_path() ? report_path.parent_path() : std::filesystem::path(".");

    ordered_json j;
    j["model"] = model_path;
    j["method"] = method;
    j["pi"] = pi;
    j["delta"] = delta;
    j["phi"] = phi;
    j["tau_max"] = tau_max;
    j["images_per_class"] = images_per_class;
    j["seed"] = seed;
    j["screened_out"] = run.screened_out;
    j["norms"] = run.norms;
    j["r"] = run.report.statistics.r;
    if (run.report.fit) {
        j["alpha"] = run.report.fit->alpha;
        j["scale"] = run.report.fit->scale;
    } else {
        j["alpha"] = nullptr;
        j["scale"] = nullptr;
    }
    j["pv"] = run.report.pv;
    j["underflow"] = run.report.underflow;
    j["degenerate_fit"] = run.report.degenerate_fit;
    j["decision"] = run.report.attack ? "attack" : "no-attack";
    if (run.report.inferred_target)
        j["inferred_target"] = *run.report.inferred_target;
    else
        j["inferred_target"] = nullptr;
    j["invariants_ok"] = run.invariants_ok;
    j["seconds"] = run.seconds;

    j["per_target"] = ordered_json::array();
    for (const auto& res : run.per_target) {
        const std::string result_name = stem + "-t" + std::to_string(res.target) + ".json";
        ordered_json rj;
        rj["target"] = res.target;
        rj["norm"] = l2_norm(res.pattern);
        rj["iterations"] = res.iterations;
        rj["converged"] = res.converged;
        rj["stalled"] = res.stalled;
        rj["weight_resets"] = res.weight_resets;
        rj["screened_out"] = res.screened_out;
        rj["result_file"] = result_name;
        j["per_target"].push_back(rj);

        ordered_json result;
        result["target"] = res.target;
        result["norm"] = l2_norm(res.pattern);
        result["weights"] = res.weights;
        result["iterations"] = res.iterations;
        result["converged"] = res.converged;
        result["stalled"] = res.stalled;
        result["weight_resets"] = res.weight_resets;
        result["screened_out"] = res.screened_out;
        result["pattern"] = pattern_json(res.pattern);
        spit(dir / result_name, result.dump(2) + "\n");
    }
    spit(report_path, j.dump(2) + "\n");

    if (run.report.attack)
        std::printf("attack detected: target %d, pv %.6g\n", *run.report.inferred_target,
                    run.report.pv);
    else
        std::printf("no attack detected: pv %.6g\n", run.report.pv);
    return run.report.attack ? 1 : 0;
}

int cmd_experiment(const std::string& suite_path, const std::string& out_dir) {
    harness::ExperimentSuite suite = harness::load_suite(suite_path);
    harness::SuiteReport report = harness::run_suite(suite);
    harness::emit_report(report, out_dir);
    int failed = 0;
    for (const auto& r : report.rows) failed += r.failed ? 1 : 0;
    std::printf("suite %s: %zu models, %zu rows (%d failed), digest %s, %.1fs\n",
                report.config.name.c_str(), report.models.size(), report.rows.size(), failed,
                report.digest.c_str(), report.total_seconds);
    return 0;
}

int cmd_export_pattern(const std::string& result_path, const std::string& out_path) {
    ordered_json j;
    try {
        j = ordered_json::parse(slurp(result_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(result_path + ": " + e.what());
    }
    if (!j.contains("pattern")) throw FormatError(result_path + ": no pattern field");
    Tensor pattern = pattern_from_json(j.at("pattern"), result_path);
    harness::write_pattern_image(pattern, out_path);
    std::printf("wrote %s (%dx%d, %d channel%s)\n", out_path.c_str(), pattern.shape().height,
                pattern.shape().width, pattern.shape().channels,
                pattern.shape().channels == 1 ? "" : "s");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"backdoor attack and reverse-engineering detection workbench"};
    app.require_subcommand(1);
    int rc = 0;

    std::string config_path, out_path, spec_path, train_dir, data_dir, arch = "cnn-small";
    std::string train_config_path, model_path, test_dir, clean_dir, method = "lred";
    std::string suite_path, result_path;
    double pi = 0.9, delta = 1e-4, phi = 0.05;
    int tau_max = 2000, images_per_class = 8;
    std::uint64_t seed = 1;

    auto* gen = app.add_subcommand("gen-data", "synthesize a labeled image dataset");
    gen->add_option("--config", config_path, "dataset config JSON")->required();
    gen->add_option("--out", out_path, "output directory")->required();
    gen->callback([&] { rc = cmd_gen_data(config_path, out_path); });

    auto* craft = app.add_subcommand("craft", "poison a training set per an attack spec");
    craft->add_option("--spec", spec_path, "attack spec file")->required();
    craft->add_option("--train", train_dir, "directory holding train.lrds")->required();
    craft->add_option("--out", out_path, "output directory")->required();
    craft->callback([&] { rc = cmd_craft(spec_path, train_dir, out_path); });

    auto* train = app.add_subcommand("train", "train a classifier");
    train->add_option("--data", data_dir, "directory holding train.lrds")->required();
    train->add_option("--arch", arch, "linear | mlp | cnn-tiny | cnn-small");
    train->add_option("--train-config", train_config_path, "training config JSON");
    train->add_option("--out", model_path, "output model file")->required();
    train->callback([&] { rc = cmd_train(data_dir, arch, train_config_path, model_path); });

    auto* eval = app.add_subcommand("eval", "measure clean test accuracy and attack success");
    eval->add_option("--model", model_path, "model file")->required();
    eval->add_option("--test", test_dir, "directory holding test.lrds")->required();
    eval->add_option("--spec", spec_path, "attack spec file (adds ASR and collateral rates)");
    eval->callback([&] { rc = cmd_eval(model_path, test_dir, spec_path); });

    auto* detect = app.add_subcommand("detect", "reverse-engineer patterns and test for a backdoor");
    detect->add_option("--model", model_path, "model file")->required();
    detect->add_option("--clean", clean_dir, "directory holding test.lrds")->required();
    detect->add_option("--method", method, "lred | ured | pred");
    detect->add_option("--pi", pi, "target misclassification fraction");
    detect->add_option("--delta", delta, "step size");
    detect->add_option("--phi", phi, "detection threshold on the order-statistic p-value");
    detect->add_option("--tau-max", tau_max, "iteration cap per putative target");
    detect->add_option("--images-per-class", images_per_class, "detection images per class");
    detect->add_option("--seed", seed, "estimation seed");
    detect->add_option("--out", out_path, "report JSON path")->required();
    detect->callback([&] {
        rc = cmd_detect(model_path, clean_dir, method, pi, delta, phi, tau_max, images_per_class,
                        seed, out_path);
    });

    auto* experiment = app.add_subcommand("experiment", "run a full suite and emit reports");
    experiment->add_option("--suite", suite_path, "suite config JSON")->required();
    experiment->add_option("--out", out_path, "output directory")->required();
    experiment->callback([&] { rc = cmd_experiment(suite_path, out_path); });

    auto* exp_pat = app.add_subcommand("export-pattern", "render an estimation result's pattern");
    exp_pat->add_option("--result", result_path, "estimation result JSON from detect")->required();
    exp_pat->add_option("--out", out_path, "output image (ppm for 3 channels, pgm for 1)")
        ->required();
    exp_pat->callback([&] { rc = cmd_export_pattern(result_path, out_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}
