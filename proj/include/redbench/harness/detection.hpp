#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "redbench/anomaly/anomaly.hpp"
#include "redbench/dataset.hpp"
#include "redbench/micronet/model.hpp"
#include "redbench/red/red.hpp"

namespace redbench::harness {

// Method names accepted by the CLI and suite configs. "lred-data-limited"
// shares the lred algorithm and differs only in how many images it gets.
enum class Algorithm { kLred, kUred, kPred };
Algorithm algorithm_for_method(const std::string& method);

// Per-class uniform sampling without replacement from the pool, keeping only
// images the model classifies correctly, walking a seeded shuffle until
// images_per_class are found. Returns the sets and the number of
// misclassified images skipped along the way. Classes that yield fewer
// images are left short (logged); a class with none at all throws.
std::pair<red::ClassSets, int> sample_detection_sets(const micronet::ClassifierModel& model,
                                                     const LabeledDataset& pool,
                                                     int images_per_class, std::uint64_t seed);

struct DetectionOptions {
    std::string method = "lred";
    red::EstimationParams estimation;
    double phi = 0.05;
    int images_per_class = 8;
    std::uint64_t sample_seed = 1;
};

struct DetectionRun {
    anomaly::DetectionReport report;
    // One entry per putative target. For pred this is the minimum-norm result
    // over the source classes.
    std::vector<red::EstimationResult> per_target;
    std::vector<double> norms;
    int screened_out = 0;    // misclassified images skipped while sampling
    bool invariants_ok = true;
    double seconds = 0.0;
};

DetectionRun run_detection(const micronet::ClassifierModel& model, const LabeledDataset& pool,
                           const DetectionOptions& options);

}  // namespace redbench::harness
