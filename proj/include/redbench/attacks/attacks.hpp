#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redbench/dataset.hpp"
#include "redbench/micronet/model.hpp"
#include "redbench/tensor.hpp"

namespace redbench::attacks {

enum class PatternKind : std::uint8_t {
    kGlobalAlternating,
    kLocalSquare,
    kChessboardPatch,
    kSinglePixel,
    kCustom,
};

const char* pattern_kind_name(PatternKind kind);
PatternKind parse_pattern_kind(const std::string& name);

// Default perturbation sizes, as fractions of the 8-bit range.
inline constexpr double kGlobalMagnitude = 2.0 / 255.0;
inline constexpr double kLocalSquareMagnitude = 50.0 / 255.0;
inline constexpr double kChessboardMagnitude = 25.0 / 255.0;
inline constexpr double kSinglePixelMagnitude = 50.0 / 255.0;

enum class PatchCorner : std::uint8_t { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

struct BackdoorPattern {
    Tensor perturbation;
    PatternKind kind = PatternKind::kCustom;
    double magnitude = 0.0;
    // Placement metadata for the localized kinds, -1 when not applicable.
    int anchor_row = -1;
    int anchor_col = -1;
    int channel = -1;
    int patch_size = -1;
};

// One perturbed pixel per disjoint 2x2 window, all channels: the top-left
// pixel when the window's (row + col) parity is even, the bottom-right
// otherwise. Rows or columns left over when H or W is odd get no
// perturbation. The layout is fixed; seed is accepted for interface
// uniformity and ignored.
BackdoorPattern make_global_pattern(Shape shape, double magnitude = kGlobalMagnitude,
                                    std::uint64_t seed = 0);

// 2x2 square on one channel at a seeded uniform location.
BackdoorPattern make_local_square_pattern(Shape shape, double magnitude = kLocalSquareMagnitude,
                                          std::uint64_t seed = 0);

// Chessboard parity patch of patch_size x patch_size in a corner, all
// channels: cells with even (row + col) parity in patch-local coordinates.
BackdoorPattern make_chessboard_pattern(Shape shape, double magnitude = kChessboardMagnitude,
                                        int patch_size = 6,
                                        PatchCorner corner = PatchCorner::kBottomRight);

// One pixel, one channel.
BackdoorPattern make_single_pixel_pattern(Shape shape, double magnitude = kSinglePixelMagnitude,
                                          int row = -1, int col = -1, int channel = 0);

BackdoorPattern make_custom_pattern(Tensor perturbation);

// Additive embedding: clamp(x + v, 0, 1) elementwise.
Image embed(const Image& image, const Tensor& perturbation);
Image embed(const Image& image, const BackdoorPattern& pattern);

// Snap to the 8-bit grid {0, 1/255, ..., 1}, round-half-to-even.
// Precondition: entries already lie in [0, 1].
Image quantize_8bit(const Image& image);

struct AttackSpec {
    std::vector<int> source_classes;  // sorted, deduplicated, excludes target
    int target_class = -1;
    BackdoorPattern pattern;
    int poison_per_source = 0;
    std::uint64_t seed = 0;
};

// Validates ranges, sorts and deduplicates the sources, rejects a target
// that appears among them.
AttackSpec make_attack_spec(std::vector<int> source_classes, int target_class,
                            BackdoorPattern pattern, int poison_per_source, std::uint64_t seed);

enum class Provenance : std::uint8_t { kClean = 0, kBackdoor = 1 };

struct PoisonedDataset {
    LabeledDataset combined;                    // clean remainder + poisoned items
    std::vector<Provenance> provenance;         // aligned with combined
    std::vector<LabeledImage> removed_originals;
};

// Samples poison_per_source items per source class without replacement,
// removes the originals, and appends embedded + quantized copies labeled as
// the target. Dataset size is preserved. Deterministic in spec.seed.
PoisonedDataset poison_dataset(const LabeledDataset& clean_train, const AttackSpec& spec);

// Fraction of test items from the source classes that the model assigns to
// the target once the pattern is embedded and the result re-quantized.
// Items already labeled with the target class never count.
double attack_success_rate(const micronet::ClassifierModel& model, const LabeledDataset& test,
                           const AttackSpec& spec);

// Per-class rate at which embedding the pattern flips items of classes
// outside the attack to the target. Entries are empty for the target class
// itself, the source classes, and classes absent from the test set.
struct CollateralDamage {
    std::vector<std::optional<double>> flip_rate_to_target;  // length num_classes
};
CollateralDamage collateral_damage_profile(const micronet::ClassifierModel& model,
                                           const LabeledDataset& test, const AttackSpec& spec);

}  // namespace redbench::attacks
