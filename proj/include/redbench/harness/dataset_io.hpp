#pragma once

#include <filesystem>

#include "redbench/dataset.hpp"

namespace redbench::harness {

// Labeled dataset container: magic "LRDS", version byte, class count, shape,
// item count, then per item a label and 8-bit pixel bytes, CRC-32 tail.
// Values must already sit on the 8-bit grid (the pipeline quantizes
// everything it stores).
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace redbench::harness
