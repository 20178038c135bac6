#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "redbench/attacks/attacks.hpp"
#include "redbench/errors.hpp"
#include "redbench/micronet/model.hpp"
#include "redbench/micronet/train.hpp"
#include "redbench/rng.hpp"

using namespace redbench;
using namespace redbench::attacks;

namespace {

Image random_image(Shape shape, Rng& rng) {
    Image img(shape);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform01();
    return quantize_8bit(img);
}

LabeledDataset tiny_dataset(Shape shape, int classes, int per_class, std::uint64_t seed) {
    LabeledDataset out(classes, shape);
    Rng rng(seed);
    for (int k = 0; k < classes; ++k)
        for (int i = 0; i < per_class; ++i) out.add(random_image(shape, rng), k);
    return out;
}

micronet::ClassifierModel constant_class_model(Shape shape, int classes, int winner) {
    micronet::ClassifierModel m(shape, micronet::make_architecture("linear", shape, classes));
    m.params()[0][static_cast<std::size_t>(classes) * shape.size() + winner] = 9.0f;
    return m;
}

}  // namespace

TEST_CASE("embed clamps and leaves the input untouched") {
    Shape shape{1, 2, 2};
    Image x(shape, 0.99);
    Tensor v(shape, 0.05);
    Image y = embed(x, v);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == 0.99);

    Image same = embed(x, Tensor(shape, 0.0));
    CHECK(same == x);

    CHECK_THROWS_AS((void)embed(x, Tensor(Shape{1, 2, 3})), InputError);
}

TEST_CASE("global pattern: one perturbed position per 2x2 window") {
    Shape shape{3, 4, 4};
    BackdoorPattern p = make_global_pattern(shape);
    CHECK(p.magnitude == doctest::Approx(2.0 / 255.0));
    CHECK(l0_count(p.perturbation) == 12);  // 4 windows x 3 channels

    int positions = 0;
    for (int wy = 0; wy < 2; ++wy)
        for (int wx = 0; wx < 2; ++wx) {
            int hit = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    bool any = false;
                    for (int c = 0; c < 3; ++c) {
                        const double v = p.perturbation.at(c, 2 * wy + dy, 2 * wx + dx);
                        if (v != 0.0) {
                            any = true;
                            CHECK(std::abs(v) == doctest::Approx(p.magnitude));
                        }
                    }
                    if (any) ++hit;
                }
            CHECK(hit == 1);
            ++positions;
        }
    CHECK(positions == 4);
}

TEST_CASE("global pattern on larger even shapes covers every window") {
    Shape shape{3, 16, 16};
    BackdoorPattern p = make_global_pattern(shape, 2.0 / 255.0, 77);
    CHECK(l0_count(p.perturbation) == std::size_t(8 * 8 * 3));
    CHECK_THROWS_AS((void)make_global_pattern(shape, 0.0), InputError);
}

TEST_CASE("local square pattern invariants") {
    Shape shape{3, 16, 16};
    BackdoorPattern p = make_local_square_pattern(shape, 50.0 / 255.0, 5);
    CHECK(l0_count(p.perturbation) == 4);
    CHECK(l2_norm(p.perturbation) == doctest::Approx(2.0 * 50.0 / 255.0));

    // the four entries form a 2x2 block in one channel
    std::set<int> channels;
    std::vector<std::pair<int, int>> at;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (p.perturbation.at(c, y, x) != 0.0) {
                    channels.insert(c);
                    at.emplace_back(y, x);
                    CHECK(p.perturbation.at(c, y, x) == doctest::Approx(50.0 / 255.0));
                }
    CHECK(channels.size() == 1);
    auto [ymin, ymax] = std::minmax_element(at.begin(), at.end());
    CHECK(ymax->first - ymin->first == 1);

    BackdoorPattern again = make_local_square_pattern(shape, 50.0 / 255.0, 5);
    CHECK(again.perturbation == p.perturbation);
    BackdoorPattern other = make_local_square_pattern(shape, 50.0 / 255.0, 6);
    CHECK(other.perturbation != p.perturbation);
}

TEST_CASE("chessboard patch parity") {
    Shape shape{3, 16, 16};
    BackdoorPattern p = make_chessboard_pattern(shape);
    CHECK(p.magnitude == doctest::Approx(25.0 / 255.0));
    // 18 perturbed positions in a 6x6 patch, all channels
    CHECK(l0_count(p.perturbation) == std::size_t(18 * 3));

    // patch sits in the bottom-right corner; adjacent pixels never both hit
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const bool hit = p.perturbation.at(0, y, x) != 0.0;
            if (y < 10 || x < 10) CHECK_FALSE(hit);
            if (hit && x + 1 < 16) CHECK(p.perturbation.at(0, y, x + 1) == 0.0);
            if (hit && y + 1 < 16) CHECK(p.perturbation.at(0, y + 1, x) == 0.0);
        }

    CHECK_THROWS_AS((void)make_chessboard_pattern(Shape{3, 4, 4}, 25.0 / 255.0, 6), InputError);
}

TEST_CASE("single pixel pattern") {
    Shape shape{3, 16, 16};
    BackdoorPattern p = make_single_pixel_pattern(shape);
    CHECK(l0_count(p.perturbation) == 1);
    CHECK(p.magnitude == doctest::Approx(50.0 / 255.0));

    Rng rng(3);
    Image x = random_image(shape, rng);
    Image y = embed(x, p);
    int diffs = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) ++diffs;
    CHECK(diffs <= 1);  // clamping can absorb the change when x is near 1

    CHECK_THROWS_AS((void)make_single_pixel_pattern(shape, 50.0 / 255.0, 99, 0, 0), InputError);
}

TEST_CASE("quantize_8bit rounds half to even and hits the grid") {
    Shape shape{1, 1, 4};
    Image x(shape);
    x.at(0, 0, 0) = 0.5;            // 127.5 -> 128
    x.at(0, 0, 1) = 0.0;
    x.at(0, 0, 2) = 1.0;
    x.at(0, 0, 3) = 126.5 / 255.0;  // ties to even -> 126
    Image q = quantize_8bit(x);
    CHECK(q.at(0, 0, 0) == 128.0 / 255.0);
    CHECK(q.at(0, 0, 1) == 0.0);
    CHECK(q.at(0, 0, 2) == 1.0);
    CHECK(q.at(0, 0, 3) == 126.0 / 255.0);

    Rng rng(11);
    Image r = random_image(shape, rng);
    CHECK(quantize_8bit(r) == r);  // idempotent
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double scaled = r[i] * 255.0;
        CHECK(scaled == std::nearbyint(scaled));
    }
}

TEST_CASE("attack spec validation") {
    Shape shape{1, 4, 4};
    BackdoorPattern p = make_global_pattern(shape, 2.0 / 255.0);
    CHECK_THROWS_AS((void)make_attack_spec({}, 1, p, 5, 1), InputError);
    CHECK_THROWS_AS((void)make_attack_spec({1, 2}, 1, p, 5, 1), InputError);
    CHECK_THROWS_AS((void)make_attack_spec({0}, 1, p, 0, 1), InputError);

    AttackSpec s = make_attack_spec({3, 2, 2}, 1, p, 5, 1);
    CHECK(s.source_classes == std::vector<int>{2, 3});
}

TEST_CASE("poison_dataset crafts, relabels, and preserves size") {
    Shape shape{1, 4, 4};
    LabeledDataset clean = tiny_dataset(shape, 4, 20, 42);
    BackdoorPattern p = make_local_square_pattern(shape, 50.0 / 255.0, 9);
    AttackSpec spec = make_attack_spec({1, 3}, 0, p, 6, 31);

    PoisonedDataset out = poison_dataset(clean, spec);
    CHECK(out.combined.size() == clean.size());
    CHECK(out.provenance.size() == out.combined.size());
    CHECK(out.removed_originals.size() == 12);

    int backdoor = 0;
    for (std::size_t i = 0; i < out.combined.size(); ++i)
        if (out.provenance[i] == Provenance::kBackdoor) {
            ++backdoor;
            CHECK(out.combined[i].label == 0);
        }
    CHECK(backdoor == 12);

    // class counts: sources lose what the target gains
    auto counts = out.combined.class_counts();
    CHECK(counts[0] == 20 + 12);
    CHECK(counts[1] == 14);
    CHECK(counts[2] == 20);
    CHECK(counts[3] == 14);

    // each crafted item equals quantize(embed(original)) for some removed original
    for (std::size_t i = 0; i < out.combined.size(); ++i) {
        if (out.provenance[i] != Provenance::kBackdoor) continue;
        bool matched = false;
        for (const auto& orig : out.removed_originals)
            if (quantize_8bit(embed(orig.image, p)) == out.combined[i].image) {
                matched = true;
                break;
            }
        CHECK(matched);
    }

    // removed originals are gone from the clean portion
    for (const auto& orig : out.removed_originals)
        for (std::size_t i = 0; i < out.combined.size(); ++i)
            if (out.provenance[i] == Provenance::kClean)
                CHECK_FALSE(out.combined[i].image == orig.image);

    PoisonedDataset again = poison_dataset(clean, spec);
    CHECK(again.combined.items().size() == out.combined.items().size());
    for (std::size_t i = 0; i < out.combined.size(); ++i) {
        CHECK(again.combined[i].label == out.combined[i].label);
        CHECK(again.combined[i].image == out.combined[i].image);
    }

    AttackSpec greedy = make_attack_spec({1}, 0, p, 21, 31);
    CHECK_THROWS_AS((void)poison_dataset(clean, greedy), InputError);
}

TEST_CASE("attack_success_rate counts only source-class flips") {
    Shape shape{1, 4, 4};
    LabeledDataset test = tiny_dataset(shape, 3, 10, 7);
    BackdoorPattern p = make_single_pixel_pattern(shape, 50.0 / 255.0, 1, 1, 0);
    AttackSpec spec = make_attack_spec({1}, 0, p, 1, 5);

    auto always_target = constant_class_model(shape, 3, 0);
    CHECK(attack_success_rate(always_target, test, spec) == 1.0);

    auto never_target = constant_class_model(shape, 3, 2);
    CHECK(attack_success_rate(never_target, test, spec) == 0.0);

    LabeledDataset only_target(3, shape);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) only_target.add(random_image(shape, rng), 0);
    CHECK_THROWS_AS((void)attack_success_rate(always_target, only_target, spec), InputError);
}

TEST_CASE("collateral damage reports non-attack classes only") {
    Shape shape{1, 4, 4};
    LabeledDataset test = tiny_dataset(shape, 5, 6, 23);
    BackdoorPattern p = make_single_pixel_pattern(shape, 50.0 / 255.0, 2, 2, 0);
    AttackSpec spec = make_attack_spec({1, 2}, 0, p, 1, 5);

    auto always_target = constant_class_model(shape, 5, 0);
    CollateralDamage profile = collateral_damage_profile(always_target, test, spec);
    REQUIRE(profile.flip_rate_to_target.size() == 5);
    CHECK_FALSE(profile.flip_rate_to_target[0].has_value());  // target
    CHECK_FALSE(profile.flip_rate_to_target[1].has_value());  // source
    CHECK_FALSE(profile.flip_rate_to_target[2].has_value());  // source
    CHECK(profile.flip_rate_to_target[3] == 1.0);
    CHECK(profile.flip_rate_to_target[4] == 1.0);

    // zero pattern on a correct-by-construction model: no collateral
    LabeledDataset zeros(3, Shape{1, 2, 2});
    // class-0-only dataset and class-0-biased model give flip fraction 0 for others
    auto m = constant_class_model(Shape{1, 4, 4}, 5, 1);
    CollateralDamage none = collateral_damage_profile(m, test, spec);
    CHECK(none.flip_rate_to_target[3] == 0.0);
    CHECK(none.flip_rate_to_target[4] == 0.0);
}

TEST_CASE("custom pattern keeps signed values and reports max magnitude") {
    Shape shape{1, 2, 2};
    Tensor v(shape);
    v.at(0, 0, 0) = -0.3;
    v.at(0, 1, 1) = 0.1;
    BackdoorPattern p = make_custom_pattern(v);
    CHECK(p.kind == PatternKind::kCustom);
    CHECK(p.magnitude == doctest::Approx(0.3));
    CHECK(pattern_kind_name(p.kind) == std::string("custom"));
}

TEST_CASE("pattern kind names round-trip") {
    for (PatternKind k : {PatternKind::kGlobalAlternating, PatternKind::kLocalSquare,
                          PatternKind::kChessboardPatch, PatternKind::kSinglePixel,
                          PatternKind::kCustom})
        CHECK(parse_pattern_kind(pattern_kind_name(k)) == k);
    CHECK_THROWS_AS((void)parse_pattern_kind("blended"), InputError);
}
