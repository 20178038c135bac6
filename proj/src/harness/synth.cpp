#include "redbench/harness/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "redbench/attacks/attacks.hpp"
#include "redbench/errors.hpp"
#include "redbench/rng.hpp"

namespace redbench::harness {

namespace {

void validate(const DatasetConfig& cfg) {
    if (cfg.num_classes < 3) throw InputError("need at least 3 classes");
    if (cfg.train_per_class < 1 || cfg.test_per_class < 1)
        throw InputError("per-class counts must be at least 1");
    if (cfg.image_shape.channels < 1 || cfg.image_shape.channels > 3 ||
        cfg.image_shape.height < 4 || cfg.image_shape.width < 4)
        throw InputError("image shape out of supported range");
    if (!(cfg.noise_level >= 0.0)) throw InputError("noise level must be non-negative");
    if (!cfg.styles.empty() && static_cast<int>(cfg.styles.size()) != cfg.num_classes)
        throw InputError("style list must match the class count");
}

Image render_item(const DatasetConfig& cfg, const ClassStyle& st, Rng& rng) {
    const Shape sh = cfg.image_shape;
    Image img(sh);
    const double angle = st.angle + rng.uniform(-0.14, 0.14);
    const double freq = st.frequency * (1.0 + rng.uniform(-0.10, 0.10));
    const double phase = st.phase + rng.uniform(-0.7, 0.7);
    const double cy = (st.center_row + rng.uniform(-0.09, 0.09)) * sh.height;
    const double cx = (st.center_col + rng.uniform(-0.09, 0.09)) * sh.width;
    const double radius = st.radius * sh.height * (1.0 + rng.uniform(-0.18, 0.18));
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double two_pi = 2.0 * std::numbers::pi;

    for (int y = 0; y < sh.height; ++y) {
        for (int x = 0; x < sh.width; ++x) {
            const double ny = (y + 0.5) / sh.height - 0.5;
            const double nx = (x + 0.5) / sh.width - 0.5;
            const double proj = nx * ca + ny * sa;
            const double dy = y + 0.5 - cy;
            const double dx = x + 0.5 - cx;
            const double dist = std::sqrt(dx * dx + dy * dy);
            bool inside = false;
            switch (st.shape_kind) {
                case 0: inside = dist <= radius; break;
                case 1: inside = std::max(std::abs(dx), std::abs(dy)) <= radius; break;
                case 2: inside = std::abs(dist - radius) <= 0.35 * radius; break;
                default:
                    inside = (std::abs(dx) <= 0.35 * radius || std::abs(dy) <= 0.35 * radius) &&
                             dist <= 1.3 * radius;
            }
            for (int c = 0; c < sh.channels; ++c) {
                double v = st.palette[c] +
                           st.amplitude * std::sin(two_pi * freq * proj + phase + 0.8 * c);
                if (inside && c == st.accent_channel % sh.channels) v += st.accent_gain;
                v += cfg.noise_level * rng.normal();
                img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return attacks::quantize_8bit(img);
}

}  // namespace

std::vector<ClassStyle> default_styles(const DatasetConfig& cfg) {
    // Classes share one palette band and differ mainly in stripe
    // orientation, frequency, and a faint accent. Kept close on purpose: a
    // small classifier should separate them, but not with huge margins.
    Rng base_rng(derive_seed(cfg.seed, "style-base", 0));
    std::array<double, 3> base{};
    for (double& p : base) p = base_rng.uniform(0.45, 0.55);

    std::vector<ClassStyle> styles;
    styles.reserve(cfg.num_classes);
    for (int k = 0; k < cfg.num_classes; ++k) {
        Rng rng(derive_seed(cfg.seed, "style", static_cast<std::uint64_t>(k)));
        ClassStyle st;
        st.angle = std::numbers::pi * k / cfg.num_classes;
        st.frequency = 1.6 + 0.5 * (k % 4);
        st.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (int c = 0; c < 3; ++c) st.palette[c] = base[c] + rng.uniform(-0.004, 0.004);
        st.amplitude = rng.uniform(0.012, 0.017);
        st.shape_kind = k % 4;
        st.center_row = rng.uniform(0.42, 0.58);
        st.center_col = rng.uniform(0.42, 0.58);
        st.radius = rng.uniform(0.18, 0.23);
        st.accent_channel = k % std::max(1, cfg.image_shape.channels);
        st.accent_gain = rng.uniform(0.012, 0.019);
        styles.push_back(st);
    }
    return styles;
}

std::pair<LabeledDataset, LabeledDataset> synth_dataset(const DatasetConfig& cfg) {
    validate(cfg);
    const std::vector<ClassStyle> styles = cfg.styles.empty() ? default_styles(cfg) : cfg.styles;

    auto generate = [&](const char* split, int per_class) {
        LabeledDataset out(cfg.num_classes, cfg.image_shape);
        const std::uint64_t split_seed = derive_seed(cfg.seed, split, 0);
        for (int k = 0; k < cfg.num_classes; ++k) {
            for (int i = 0; i < per_class; ++i) {
                Rng rng(derive_seed(split_seed,
                                    (static_cast<std::uint64_t>(k) << 32) |
                                        static_cast<std::uint64_t>(i)));
                out.add(LabeledImage{render_item(cfg, styles[k], rng), k});
            }
        }
        return out;
    };
    return {generate("train", cfg.train_per_class), generate("test", cfg.test_per_class)};
}

}  // namespace redbench::harness
