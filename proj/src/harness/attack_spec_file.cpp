#include "redbench/harness/attack_spec_file.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "redbench/errors.hpp"

namespace redbench::harness {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& v, const std::string& key, const std::string& origin) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw FormatError(origin + ": bad integer for '" + key + "': " + v);
    }
}

attacks::PatchCorner parse_corner(const std::string& v, const std::string& origin) {
    if (v == "top-left") return attacks::PatchCorner::kTopLeft;
    if (v == "top-right") return attacks::PatchCorner::kTopRight;
    if (v == "bottom-left") return attacks::PatchCorner::kBottomLeft;
    if (v == "bottom-right") return attacks::PatchCorner::kBottomRight;
    throw FormatError(origin + ": unknown corner '" + v + "'");
}

}  // namespace

AttackFileSpec parse_attack_spec_text(const std::string& text, const std::string& origin) {
    AttackFileSpec spec;
    std::unordered_set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key: value'");
        const std::string key = trim(line.substr(0, colon));
        const std::string value = trim(line.substr(colon + 1));
        if (value.empty())
            throw FormatError(origin + ":" + std::to_string(lineno) + ": empty value for '" +
                              key + "'");
        if (!seen.insert(key).second)
            throw FormatError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "'");

        if (key == "sources") {
            std::istringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ','))
                spec.sources.push_back(parse_int(trim(tok), key, origin));
        } else if (key == "target") {
            spec.target = parse_int(value, key, origin);
        } else if (key == "kind") {
            try {
                spec.kind = attacks::parse_pattern_kind(value);
            } catch (const InputError& e) {
                throw FormatError(origin + ":" + std::to_string(lineno) + ": " + e.what());
            }
        } else if (key == "magnitude_num") {
            spec.magnitude = parse_int(value, key, origin) / 255.0;
        } else if (key == "poison_per_source") {
            spec.poison_per_source = parse_int(value, key, origin);
        } else if (key == "seed") {
            try {
                std::size_t used = 0;
                spec.seed = std::stoull(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw FormatError(origin + ":" + std::to_string(lineno) + ": bad seed: " + value);
            }
        } else if (key == "patch_size") {
            spec.patch_size = parse_int(value, key, origin);
        } else if (key == "corner") {
            spec.corner = parse_corner(value, origin);
        } else if (key == "pixel_row") {
            spec.pixel_row = parse_int(value, key, origin);
        } else if (key == "pixel_col") {
            spec.pixel_col = parse_int(value, key, origin);
        } else if (key == "pixel_channel") {
            spec.pixel_channel = parse_int(value, key, origin);
        } else {
            throw FormatError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key +
                              "'");
        }
    }
    if (spec.sources.empty()) throw FormatError(origin + ": missing 'sources'");
    if (spec.target < 0) throw FormatError(origin + ": missing 'target'");
    if (spec.poison_per_source < 1) throw FormatError(origin + ": missing 'poison_per_source'");
    return spec;
}

AttackFileSpec load_attack_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_attack_spec_text(buf.str(), path.filename().string());
}

attacks::AttackSpec AttackFileSpec::instantiate(Shape image_shape) const {
    attacks::BackdoorPattern pattern;
    switch (kind) {
        case attacks::PatternKind::kGlobalAlternating:
            pattern = attacks::make_global_pattern(
                image_shape, magnitude > 0.0 ? magnitude : attacks::kGlobalMagnitude, seed);
            break;
        case attacks::PatternKind::kLocalSquare:
            pattern = attacks::make_local_square_pattern(
                image_shape, magnitude > 0.0 ? magnitude : attacks::kLocalSquareMagnitude, seed);
            break;
        case attacks::PatternKind::kChessboardPatch:
            pattern = attacks::make_chessboard_pattern(
                image_shape, magnitude > 0.0 ? magnitude : attacks::kChessboardMagnitude,
                patch_size, corner);
            break;
        case attacks::PatternKind::kSinglePixel:
            pattern = attacks::make_single_pixel_pattern(
                image_shape, magnitude > 0.0 ? magnitude : attacks::kSinglePixelMagnitude,
                pixel_row, pixel_col, pixel_channel);
            break;
        case attacks::PatternKind::kCustom:
            throw InputError("custom patterns cannot be built from a spec file");
    }
    return attacks::make_attack_spec(sources, target, std::move(pattern), poison_per_source,
                                     seed);
}

}  // namespace redbench::harness
