#include <cmath>
#include <fstream>

#include <json.hpp>

#include "redbench/digest.hpp"
#include "redbench/errors.hpp"
#include "redbench/harness/pattern_image.hpp"
#include "redbench/harness/suite.hpp"

namespace redbench::harness {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json config_json(const ExperimentSuite& s) {
    ordered_json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["arch"] = s.arch;
    j["emit_timings"] = s.emit_timings;
    j["dataset"] = {{"classes", s.dataset.num_classes},
                    {"channels", s.dataset.image_shape.channels},
                    {"height", s.dataset.image_shape.height},
                    {"width", s.dataset.image_shape.width},
                    {"train_per_class", s.dataset.train_per_class},
                    {"test_per_class", s.dataset.test_per_class},
                    {"noise", s.dataset.noise_level},
                    {"seed", s.dataset.seed}};
    j["train"] = {{"epochs", s.train.epochs},
                  {"batch_size", s.train.batch_size},
                  {"learning_rate", s.train.learning_rate},
                  {"seed", s.train.seed},
                  {"pad_crop", s.train.pad_crop},
                  {"hflip", s.train.hflip}};
    j["groups"] = ordered_json::array();
    for (const auto& g : s.groups)
        j["groups"].push_back({{"name", g.name},
                               {"source_count", g.source_count},
                               {"pattern", attacks::pattern_kind_name(g.pattern_kind)},
                               {"magnitude", g.magnitude},
                               {"poison_per_source", g.poison_per_source},
                               {"models", g.models},
                               {"patch_size", g.patch_size}});
    j["clean_models"] = s.clean_models;
    j["detection"] = {{"pi", s.detection.pi},
                      {"delta", s.detection.delta},
                      {"phi", s.detection.phi},
                      {"tau_max", s.detection.tau_max},
                      {"images_per_class", s.detection.images_per_class},
                      {"data_limited_images", s.detection.data_limited_images}};
    j["methods"] = ordered_json::array();
    for (const auto& m : s.methods) {
        ordered_json mj;
        mj["method"] = m.method;
        if (!m.groups.empty()) mj["groups"] = m.groups;
        if (m.images_per_class > 0) mj["images_per_class"] = m.images_per_class;
        if (m.models_per_group > 0) mj["models_per_group"] = m.models_per_group;
        if (m.clean_models >= 0) mj["clean_models"] = m.clean_models;
        j["methods"].push_back(std::move(mj));
    }
    return j;
}

void put_optional(ordered_json& j, const char* key, double v) {
    if (std::isnan(v))
        j[key] = nullptr;
    else
        j[key] = v;
}

std::string csv_num(double v, const char* fmt = "%.10g") {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

std::string report_json_text(const SuiteReport& report) {
    ordered_json j;
    j["suite"] = report.config.name;
    j["digest"] = report.digest;
    j["config"] = config_json(report.config);
    put_optional(j, "clean_cta_mean", report.clean_cta_mean);
    j["total_seconds"] = report.total_seconds;

    j["models"] = ordered_json::array();
    for (const auto& m : report.models) {
        ordered_json mj;
        mj["id"] = m.model_id;
        mj["group"] = m.group;
        mj["attacked"] = m.attacked;
        if (m.attacked) {
            mj["true_target"] = m.true_target;
            mj["sources"] = m.source_classes;
            mj["pattern"] = m.pattern_kind;
            mj["magnitude"] = m.magnitude;
            mj["poison_per_source"] = m.poison_per_source;
        }
        put_optional(mj, "asr", m.asr);
        put_optional(mj, "cta", m.cta);
        put_optional(mj, "train_accuracy", m.train_accuracy);
        mj["train_seconds"] = m.train_seconds;
        if (m.failed) {
            mj["failed"] = true;
            mj["diagnostic"] = m.diagnostic;
        }
        j["models"].push_back(std::move(mj));
    }

    j["rows"] = ordered_json::array();
    for (const auto& r : report.rows) {
        ordered_json rj;
        rj["model"] = r.model_id;
        rj["group"] = r.group;
        rj["method"] = r.method;
        rj["attacked"] = r.attacked;
        if (r.failed) {
            rj["failed"] = true;
            rj["diagnostic"] = r.diagnostic;
            j["rows"].push_back(std::move(rj));
            continue;
        }
        put_optional(rj, "asr", r.asr);
        put_optional(rj, "cta", r.cta);
        rj["pv"] = r.pv;
        rj["underflow"] = r.underflow;
        if (r.degenerate_fit) rj["degenerate_fit"] = true;
        rj["decision"] = r.attack_detected ? "attack" : "no-attack";
        if (r.attack_detected) rj["inferred_target"] = r.inferred_target;
        if (r.attacked) rj["true_target"] = r.true_target;
        rj["correct"] = r.correct;
        put_optional(rj, "alpha", r.alpha);
        put_optional(rj, "scale", r.scale);
        rj["norms"] = r.norms;
        rj["r"] = r.r;
        rj["iterations"] = r.iterations;
        rj["converged"] = ordered_json::array();
        for (auto c : r.converged) rj["converged"].push_back(c != 0);
        if (!r.true_target_weights.empty()) rj["true_target_weights"] = r.true_target_weights;
        rj["screened_out"] = r.screened_out;
        rj["invariants_ok"] = r.invariants_ok;
        rj["detect_seconds"] = r.detect_seconds;
        j["rows"].push_back(std::move(rj));
    }

    j["scores"] = ordered_json::array();
    for (const auto& s : report.scores)
        j["scores"].push_back({{"method", s.method},
                               {"group", s.group},
                               {"successes", s.successes},
                               {"models", s.models}});

    j["weight_concentration"] = ordered_json::array();
    for (const auto& wg : report.weight_concentration) {
        ordered_json wj;
        wj["method"] = wg.method;
        wj["group"] = wg.group;
        wj["dominance_count"] = wg.dominance_count;
        wj["models"] = static_cast<int>(wg.entries.size());
        wj["entries"] = ordered_json::array();
        for (const auto& e : wg.entries)
            wj["entries"].push_back({{"model", e.model_id},
                                     {"source_mean", e.source_mean},
                                     {"non_source_mean", e.non_source_mean}});
        j["weight_concentration"].push_back(std::move(wj));
    }

    return j.dump(2) + "\n";
}

std::string report_csv_text(const SuiteReport& report) {
    std::string out =
        "model,group,method,asr,cta,pv,underflow,decision,inferred_target,true_target,correct,"
        "screened_out,invariants_ok,detect_seconds,failed\n";
    for (const auto& r : report.rows) {
        out += r.model_id + "," + r.group + "," + r.method + ",";
        out += csv_num(r.asr) + "," + csv_num(r.cta) + ",";
        if (r.failed) {
            out += ",,,,,,,,,true\n";
            continue;
        }
        out += csv_num(r.pv, "%.6g") + "," + (r.underflow ? "true" : "false") + ",";
        out += r.attack_detected ? "attack" : "no-attack";
        out += ",";
        out += r.attack_detected ? std::to_string(r.inferred_target) : "";
        out += ",";
        out += r.attacked ? std::to_string(r.true_target) : "";
        out += ",";
        out += r.correct ? "true" : "false";
        out += "," + std::to_string(r.screened_out) + ",";
        out += r.invariants_ok ? "true" : "false";
        out += "," + csv_num(r.detect_seconds, "%.3f") + ",false\n";
    }
    return out;
}

void emit_report(const SuiteReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::filesystem::create_directories(out_dir / "patterns", ec);

    auto write_text = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + p.string() + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("short write to " + p.string());
    };
    write_text(out_dir / "report.json", report_json_text(report));
    write_text(out_dir / "rows.csv", report_csv_text(report));

    for (const auto& r : report.rows) {
        if (r.failed || r.inferred_pattern.size() == 0) continue;
        const char* ext = r.inferred_pattern.shape().channels == 1 ? ".pgm" : ".ppm";
        write_pattern_image(r.inferred_pattern,
                            out_dir / "patterns" / (r.model_id + "-" + r.method + ext));
    }
}

}  // namespace redbench::harness
