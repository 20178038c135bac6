#include "redbench/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "redbench/errors.hpp"
#include "redbench/rng.hpp"

namespace redbench::attacks {

const char* pattern_kind_name(PatternKind kind) {
    switch (kind) {
        case PatternKind::kGlobalAlternating: return "global";
        case PatternKind::kLocalSquare: return "local-square";
        case PatternKind::kChessboardPatch: return "chessboard";
        case PatternKind::kSinglePixel: return "single-pixel";
        case PatternKind::kCustom: return "custom";
    }
    return "?";
}

PatternKind parse_pattern_kind(const std::string& name) {
    if (name == "global") return PatternKind::kGlobalAlternating;
    if (name == "local-square") return PatternKind::kLocalSquare;
    if (name == "chessboard") return PatternKind::kChessboardPatch;
    if (name == "single-pixel") return PatternKind::kSinglePixel;
    if (name == "custom") return PatternKind::kCustom;
    throw InputError("unknown pattern kind '" + name + "'");
}

namespace {

void require_positive_magnitude(double magnitude) {
    if (!(magnitude > 0.0) || !std::isfinite(magnitude))
        throw InputError("pattern magnitude must be positive and finite");
}

}  // namespace

BackdoorPattern make_global_pattern(Shape shape, double magnitude, std::uint64_t) {
    require_positive_magnitude(magnitude);
    if (shape.height < 2 || shape.width < 2)
        throw InputError("global pattern needs at least a 2x2 image");
    BackdoorPattern p;
    p.kind = PatternKind::kGlobalAlternating;
    p.magnitude = magnitude;
    p.perturbation = Tensor(shape);
    for (int wy = 0; wy * 2 + 1 < shape.height; ++wy) {
        for (int wx = 0; wx * 2 + 1 < shape.width; ++wx) {
            const bool top_left = ((wy + wx) % 2) == 0;
            const int y = wy * 2 + (top_left ? 0 : 1);
            const int x = wx * 2 + (top_left ? 0 : 1);
            for (int c = 0; c < shape.channels; ++c) p.perturbation.at(c, y, x) = magnitude;
        }
    }
    return p;
}

BackdoorPattern make_local_square_pattern(Shape shape, double magnitude, std::uint64_t seed) {
    require_positive_magnitude(magnitude);
    if (shape.height < 2 || shape.width < 2)
        throw InputError("local square pattern needs at least a 2x2 image");
    Rng rng(seed);
    BackdoorPattern p;
    p.kind = PatternKind::kLocalSquare;
    p.magnitude = magnitude;
    p.anchor_row = rng.below_int(shape.height - 1);
    p.anchor_col = rng.below_int(shape.width - 1);
    p.channel = rng.below_int(shape.channels);
    p.patch_size = 2;
    p.perturbation = Tensor(shape);
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
            p.perturbation.at(p.channel, p.anchor_row + dy, p.anchor_col + dx) = magnitude;
    return p;
}

BackdoorPattern make_chessboard_pattern(Shape shape, double magnitude, int patch_size,
                                        PatchCorner corner) {
    require_positive_magnitude(magnitude);
    if (patch_size < 1 || patch_size > shape.height || patch_size > shape.width)
        throw InputError("chessboard patch does not fit the image");
    BackdoorPattern p;
    p.kind = PatternKind::kChessboardPatch;
    p.magnitude = magnitude;
    p.patch_size = patch_size;
    p.anchor_row = (corner == PatchCorner::kTopLeft || corner == PatchCorner::kTopRight)
                       ? 0
                       : shape.height - patch_size;
    p.anchor_col = (corner == PatchCorner::kTopLeft || corner == PatchCorner::kBottomLeft)
                       ? 0
                       : shape.width - patch_size;
    p.perturbation = Tensor(shape);
    for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
            if ((dy + dx) % 2 == 0)
                for (int c = 0; c < shape.channels; ++c)
                    p.perturbation.at(c, p.anchor_row + dy, p.anchor_col + dx) = magnitude;
    return p;
}

BackdoorPattern make_single_pixel_pattern(Shape shape, double magnitude, int row, int col,
                                          int channel) {
    require_positive_magnitude(magnitude);
    if (row < 0) row = shape.height / 2;
    if (col < 0) col = shape.width / 2;
    if (row >= shape.height || col >= shape.width || channel < 0 || channel >= shape.channels)
        throw InputError("single pixel location out of range");
    BackdoorPattern p;
    p.kind = PatternKind::kSinglePixel;
    p.magnitude = magnitude;
    p.anchor_row = row;
    p.anchor_col = col;
    p.channel = channel;
    p.patch_size = 1;
    p.perturbation = Tensor(shape);
    p.perturbation.at(channel, row, col) = magnitude;
    return p;
}

BackdoorPattern make_custom_pattern(Tensor perturbation) {
    if (!all_finite(perturbation)) throw InputError("custom pattern has non-finite entries");
    BackdoorPattern p;
    p.kind = PatternKind::kCustom;
    p.magnitude = 0.0;
    for (double v : perturbation.values()) p.magnitude = std::max(p.magnitude, std::abs(v));
    p.perturbation = std::move(perturbation);
    return p;
}

Image embed(const Image& image, const Tensor& perturbation) {
    if (!image.same_shape(perturbation))
        throw InputError("embed: image and perturbation shapes differ");
    Image out(image.shape());
    const double* x = image.data();
    const double* v = perturbation.data();
    for (std::size_t i = 0; i < image.size(); ++i)
        out.data()[i] = std::clamp(x[i] + v[i], 0.0, 1.0);
    return out;
}

Image embed(const Image& image, const BackdoorPattern& pattern) {
    return embed(image, pattern.perturbation);
}

Image quantize_8bit(const Image& image) {
    Image out(image.shape());
    for (std::size_t i = 0; i < image.size(); ++i)
        out.data()[i] = std::nearbyint(image.data()[i] * 255.0) / 255.0;
    return out;
}

AttackSpec make_attack_spec(std::vector<int> source_classes, int target_class,
                            BackdoorPattern pattern, int poison_per_source, std::uint64_t seed) {
    if (source_classes.empty()) throw InputError("attack needs at least one source class");
    std::sort(source_classes.begin(), source_classes.end());
    source_classes.erase(std::unique(source_classes.begin(), source_classes.end()),
                         source_classes.end());
    for (int s : source_classes) {
        if (s < 0) throw InputError("negative source class");
        if (s == target_class) throw InputError("target class appears among the sources");
    }
    if (target_class < 0) throw InputError("negative target class");
    if (poison_per_source < 1) throw InputError("poison count per source must be at least 1");
    if (pattern.perturbation.size() == 0) throw InputError("attack pattern is empty");
    AttackSpec spec;
    spec.source_classes = std::move(source_classes);
    spec.target_class = target_class;
    spec.pattern = std::move(pattern);
    spec.poison_per_source = poison_per_source;
    spec.seed = seed;
    return spec;
}

PoisonedDataset poison_dataset(const LabeledDataset& clean_train, const AttackSpec& spec) {
    if (spec.target_class >= clean_train.num_classes())
        throw InputError("target class out of range for this dataset");
    for (int s : spec.source_classes)
        if (s >= clean_train.num_classes()) throw InputError("source class out of range");
    if (!(clean_train.image_shape() == spec.pattern.perturbation.shape()))
        throw InputError("pattern shape does not match the dataset");

    std::unordered_set<std::size_t> taken;
    std::vector<LabeledImage> poisoned;
    poisoned.reserve(static_cast<std::size_t>(spec.poison_per_source) *
                     spec.source_classes.size());
    for (int s : spec.source_classes) {
        const std::vector<std::size_t>& pool = clean_train.class_indices(s);
        if (pool.size() < static_cast<std::size_t>(spec.poison_per_source))
            throw InputError("class " + std::to_string(s) + " has only " +
                             std::to_string(pool.size()) + " items, need " +
                             std::to_string(spec.poison_per_source));
        Rng rng(derive_seed(spec.seed, "poison", static_cast<std::uint64_t>(s)));
        const std::vector<std::size_t> picks =
            rng.sample_without_replacement(pool.size(), spec.poison_per_source);
        for (std::size_t pi : picks) {
            const std::size_t gi = pool[pi];
            taken.insert(gi);
            Image crafted = quantize_8bit(embed(clean_train[gi].image, spec.pattern));
            poisoned.push_back(LabeledImage{std::move(crafted), spec.target_class});
        }
    }

    PoisonedDataset out;
    out.combined = LabeledDataset(clean_train.num_classes(), clean_train.image_shape());
    out.removed_originals.reserve(taken.size());
    for (std::size_t i = 0; i < clean_train.size(); ++i) {
        if (taken.count(i)) {
            out.removed_originals.push_back(clean_train[i]);
        } else {
            out.combined.add(clean_train[i]);
            out.provenance.push_back(Provenance::kClean);
        }
    }
    for (auto& item : poisoned) {
        out.combined.add(std::move(item));
        out.provenance.push_back(Provenance::kBackdoor);
    }
    return out;
}

double attack_success_rate(const micronet::ClassifierModel& model, const LabeledDataset& test,
                           const AttackSpec& spec) {
    std::size_t total = 0, hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const LabeledImage& item = test[i];
        if (!std::binary_search(spec.source_classes.begin(), spec.source_classes.end(),
                                item.label))
            continue;
        ++total;
        const Image crafted = quantize_8bit(embed(item.image, spec.pattern));
        if (micronet::classify(model, crafted) == spec.target_class) ++hits;
    }
    if (total == 0) throw InputError("test set has no items from the source classes");
    return static_cast<double>(hits) / static_cast<double>(total);
}

CollateralDamage collateral_damage_profile(const micronet::ClassifierModel& model,
                                           const LabeledDataset& test, const AttackSpec& spec) {
    const int K = test.num_classes();
    std::vector<std::size_t> total(K, 0), hits(K, 0);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const LabeledImage& item = test[i];
        if (item.label == spec.target_class) continue;
        if (std::binary_search(spec.source_classes.begin(), spec.source_classes.end(),
                               item.label))
            continue;
        ++total[item.label];
        const Image crafted = quantize_8bit(embed(item.image, spec.pattern));
        if (micronet::classify(model, crafted) == spec.target_class) ++hits[item.label];
    }
    CollateralDamage out;
    out.flip_rate_to_target.assign(K, std::nullopt);
    for (int c = 0; c < K; ++c)
        if (total[c] > 0)
            out.flip_rate_to_target[c] =
                static_cast<double>(hits[c]) / static_cast<double>(total[c]);
    return out;
}

}  // namespace redbench::attacks
