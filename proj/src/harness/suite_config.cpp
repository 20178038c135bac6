#include <fstream>
#include <sstream>

#include <json.hpp>

#include "redbench/errors.hpp"
#include "redbench/harness/suite.hpp"

namespace redbench::harness {

namespace {

using nlohmann::json;

void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                 const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw FormatError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("bad value for '") + key + "'");
    }
}

DatasetConfig parse_dataset(const json& j, const std::string& where) {
    expect_keys(j,
                {"classes", "channels", "height", "width", "train_per_class", "test_per_class",
                 "noise", "seed"},
                where);
    DatasetConfig cfg;
    cfg.num_classes = get_or(j, "classes", cfg.num_classes);
    cfg.image_shape.channels = get_or(j, "channels", cfg.image_shape.channels);
    cfg.image_shape.height = get_or(j, "height", cfg.image_shape.height);
    cfg.image_shape.width = get_or(j, "width", cfg.image_shape.width);
    cfg.train_per_class = get_or(j, "train_per_class", cfg.train_per_class);
    cfg.test_per_class = get_or(j, "test_per_class", cfg.test_per_class);
    cfg.noise_level = get_or(j, "noise", cfg.noise_level);
    cfg.seed = get_or(j, "seed", cfg.seed);
    return cfg;
}

micronet::TrainConfig parse_train(const json& j, const std::string& where) {
    expect_keys(j, {"epochs", "batch_size", "learning_rate", "seed", "pad_crop", "hflip"}, where);
    micronet::TrainConfig cfg;
    cfg.epochs = get_or(j, "epochs", cfg.epochs);
    cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
    cfg.learning_rate = get_or(j, "learning_rate", cfg.learning_rate);
    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.pad_crop = get_or(j, "pad_crop", cfg.pad_crop);
    cfg.hflip = get_or(j, "hflip", cfg.hflip);
    return cfg;
}

json parse_or_throw(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(origin + ": " + e.what());
    }
}

}  // namespace

DatasetConfig parse_dataset_json(const std::string& text, const std::string& origin) {
    return parse_dataset(parse_or_throw(text, origin), origin);
}

micronet::TrainConfig parse_train_json(const std::string& text, const std::string& origin) {
    return parse_train(parse_or_throw(text, origin), origin);
}

ExperimentSuite parse_suite_json(const std::string& text, const std::string& origin) {
    json j = parse_or_throw(text, origin);
    expect_keys(j,
                {"name", "seed", "arch", "emit_timings", "dataset", "train", "groups",
                 "clean_models", "detection", "methods"},
                origin);

    ExperimentSuite suite;
    suite.name = get_or<std::string>(j, "name", "suite");
    suite.seed = get_or<std::uint64_t>(j, "seed", 1);
    suite.arch = get_or<std::string>(j, "arch", "cnn-small");
    suite.emit_timings = get_or(j, "emit_timings", true);
    if (j.contains("dataset")) suite.dataset = parse_dataset(j.at("dataset"), origin + ".dataset");
    if (j.contains("train")) suite.train = parse_train(j.at("train"), origin + ".train");
    suite.clean_models = get_or(j, "clean_models", suite.clean_models);

    if (j.contains("groups")) {
        for (const auto& g : j.at("groups")) {
            const std::string where = origin + ".groups";
            expect_keys(g,
                        {"name", "source_count", "pattern", "magnitude_num", "poison_per_source",
                         "models", "patch_size"},
                        where);
            AttackGroupConfig cfg;
            cfg.name = get_or<std::string>(g, "name", "");
            if (cfg.name.empty()) throw FormatError(where + ": group needs a name");
            if (cfg.name == "clean") throw FormatError(where + ": 'clean' is reserved");
            cfg.source_count = get_or(g, "source_count", cfg.source_count);
            cfg.pattern_kind = attacks::parse_pattern_kind(
                get_or<std::string>(g, "pattern", "global"));
            if (g.contains("magnitude_num")) {
                cfg.magnitude = g.at("magnitude_num").get<double>() / 255.0;
            } else {
                switch (cfg.pattern_kind) {
                    case attacks::PatternKind::kGlobalAlternating:
                        cfg.magnitude = attacks::kGlobalMagnitude;
                        break;
                    case attacks::PatternKind::kLocalSquare:
                        cfg.magnitude = attacks::kLocalSquareMagnitude;
                        break;
                    case attacks::PatternKind::kChessboardPatch:
                        cfg.magnitude = attacks::kChessboardMagnitude;
                        break;
                    default:
                        cfg.magnitude = attacks::kSinglePixelMagnitude;
                        break;
                }
            }
            cfg.poison_per_source = get_or(g, "poison_per_source", cfg.poison_per_source);
            cfg.models = get_or(g, "models", cfg.models);
            cfg.patch_size = get_or(g, "patch_size", cfg.patch_size);
            suite.groups.push_back(std::move(cfg));
        }
    }

    if (j.contains("detection")) {
        const json& d = j.at("detection");
        expect_keys(d,
                    {"pi", "delta", "phi", "tau_max", "images_per_class", "data_limited_images"},
                    origin + ".detection");
        suite.detection.pi = get_or(d, "pi", suite.detection.pi);
        suite.detection.delta = get_or(d, "delta", suite.detection.delta);
        suite.detection.phi = get_or(d, "phi", suite.detection.phi);
        suite.detection.tau_max = get_or(d, "tau_max", suite.detection.tau_max);
        suite.detection.images_per_class =
            get_or(d, "images_per_class", suite.detection.images_per_class);
        suite.detection.data_limited_images =
            get_or(d, "data_limited_images", suite.detection.data_limited_images);
    }

    if (j.contains("methods")) {
        for (const auto& m : j.at("methods")) {
            const std::string where = origin + ".methods";
            expect_keys(m, {"method", "groups", "images_per_class", "models_per_group",
                            "clean_models"},
                        where);
            MethodConfig cfg;
            cfg.method = get_or<std::string>(m, "method", "lred");
            if (m.contains("groups"))
                cfg.groups = m.at("groups").get<std::vector<std::string>>();
            cfg.images_per_class = get_or(m, "images_per_class", cfg.images_per_class);
            cfg.models_per_group = get_or(m, "models_per_group", cfg.models_per_group);
            cfg.clean_models = get_or(m, "clean_models", cfg.clean_models);
            suite.methods.push_back(std::move(cfg));
        }
    }
    if (suite.methods.empty()) suite.methods.push_back(MethodConfig{});
    return suite;
}

ExperimentSuite load_suite(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_suite_json(buf.str(), path.filename().string());
}

}  // namespace redbench::harness
