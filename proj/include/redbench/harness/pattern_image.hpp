#pragma once

#include <filesystem>
#include <string>

#include "redbench/tensor.hpp"

namespace redbench::harness {

// Renders a perturbation tensor as a binary PPM (3 channels) or PGM
// (1 channel): pixel = clamp(v + 127/255, 0, 1), so a zero perturbation is
// mid-gray and signed structure stays visible.
std::string encode_pattern_image(const Tensor& pattern);
void write_pattern_image(const Tensor& pattern, const std::filesystem::path& path);

}  // namespace redbench::harness
