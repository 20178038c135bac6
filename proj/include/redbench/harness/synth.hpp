#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "redbench/dataset.hpp"

namespace redbench::harness {

// One procedural class family: an oriented sinusoid texture over a color
// palette plus a shape primitive accent.
struct ClassStyle {
    double angle = 0.0;
    double frequency = 2.0;
    double phase = 0.0;
    std::array<double, 3> palette{0.5, 0.5, 0.5};
    double amplitude = 0.25;
    int shape_kind = 0;  // 0 disc, 1 square, 2 ring, 3 cross
    double center_row = 0.5;
    double center_col = 0.5;
    double radius = 0.22;
    int accent_channel = 0;
    double accent_gain = 0.35;
};

struct DatasetConfig {
    int num_classes = 8;
    Shape image_shape{3, 16, 16};
    int train_per_class = 400;
    int test_per_class = 100;
    double noise_level = 0.06;
    std::uint64_t seed = 7;
    std::vector<ClassStyle> styles;  // derived from the seed when empty
};

std::vector<ClassStyle> default_styles(const DatasetConfig& config);

// Deterministic in the config. Items are quantized to the 8-bit grid.
std::pair<LabeledDataset, LabeledDataset> synth_dataset(const DatasetConfig& config);

}  // namespace redbench::harness
