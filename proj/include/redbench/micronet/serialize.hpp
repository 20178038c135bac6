#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "redbench/micronet/model.hpp"
#include "redbench/tensor.hpp"

namespace redbench::micronet {

// CRC-32 (reflected, polynomial 0xEDB88320), as used by zip/png.
std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t seed = 0);

// Model container: magic "LRMD", version byte, little-endian header
// (input shape, class count, layer table), float32 parameters, CRC-32 tail.
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

// Tensor container: magic "LRTN", version byte, shape, float32 data, CRC-32
// tail. Used for estimated patterns.
void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace redbench::micronet
