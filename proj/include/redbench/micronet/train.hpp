#pragma once

#include <cstdint>

#include "redbench/dataset.hpp"
#include "redbench/micronet/model.hpp"

namespace redbench::micronet {

struct TrainConfig {
    int epochs = 25;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
    bool pad_crop = true;   // zero-pad by 2, random crop back
    bool hflip = true;      // mirror with probability 1/2
};

// He-scaled normal weights, zero biases, deterministic in the seed.
void initialize_parameters(ClassifierModel& model, std::uint64_t seed);

// Minibatch SGD on cross-entropy. Deterministic for a fixed config and
// dataset. Throws TrainError if the loss goes non-finite.
struct TrainStats {
    double final_epoch_loss = 0.0;
    double train_accuracy = 0.0;
};
TrainStats train_classifier(ClassifierModel& model, const LabeledDataset& train,
                            const TrainConfig& config);

}  // namespace redbench::micronet
