#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "redbench/attacks/attacks.hpp"

namespace redbench::harness {

// Parsed form of the key: value attack spec file. Pattern geometry is
// resolved against a concrete image shape by instantiate().
struct AttackFileSpec {
    std::vector<int> sources;
    int target = -1;
    attacks::PatternKind kind = attacks::PatternKind::kGlobalAlternating;
    double magnitude = 0.0;  // 0 means the kind's default
    int poison_per_source = 0;
    std::uint64_t seed = 0;
    // kind extras
    int patch_size = 6;
    attacks::PatchCorner corner = attacks::PatchCorner::kBottomRight;
    int pixel_row = -1;
    int pixel_col = -1;
    int pixel_channel = 0;

    attacks::AttackSpec instantiate(Shape image_shape) const;
};

// Text format, one "key: value" per line, '#' comments. Keys: sources
// (comma-separated), target, kind, magnitude_num (numerator over 255),
// poison_per_source, seed, and the kind extras patch_size, corner,
// pixel_row, pixel_col, pixel_channel.
AttackFileSpec parse_attack_spec_text(const std::string& text, const std::string& origin);
AttackFileSpec load_attack_spec(const std::filesystem::path& path);

}  // namespace redbench::harness
