#include "redbench/micronet/train.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "redbench/errors.hpp"
#include "redbench/log.hpp"
#include "redbench/rng.hpp"

namespace redbench::micronet {

void initialize_parameters(ClassifierModel& model, std::uint64_t seed) {
    const auto& arch = model.arch();
    auto& params = model.params();
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec& s = arch[i];
        if (params[i].empty()) continue;
        Rng rng(derive_seed(seed, "init", i));
        double fan_in = 0.0;
        std::size_t weight_count = 0;
        if (s.kind == LayerKind::kConv) {
            fan_in = static_cast<double>(s.in_channels) * s.kernel * s.kernel;
            weight_count = static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
        } else {
            fan_in = static_cast<double>(s.in_dim);
            weight_count = static_cast<std::size_t>(s.out_dim) * s.in_dim;
        }
        const double sd = std::sqrt(2.0 / fan_in);
        for (std::size_t j = 0; j < weight_count; ++j)
            params[i][j] = static_cast<float>(rng.normal(0.0, sd));
        for (std::size_t j = weight_count; j < params[i].size(); ++j) params[i][j] = 0.0f;
    }
}

namespace {

// Zero-pad by `pad`, take an offset crop of the original size, then mirror.
void augment_into(const Image& src, Image& dst, int pad, int off_y, int off_x, bool mirror) {
    const Shape sh = src.shape();
    for (int c = 0; c < sh.channels; ++c) {
        for (int y = 0; y < sh.height; ++y) {
            for (int x = 0; x < sh.width; ++x) {
                const int sy = y + off_y - pad;
                const int sx0 = x + off_x - pad;
                const int sx = mirror ? (sh.width - 1 - sx0) : sx0;
                double v = 0.0;
                if (sy >= 0 && sy < sh.height && sx >= 0 && sx < sh.width) v = src.at(c, sy, sx);
                dst.at(c, y, x) = v;
            }
        }
    }
}

}  // namespace

TrainStats train_classifier(ClassifierModel& model, const LabeledDataset& train,
                            const TrainConfig& config) {
    if (train.empty()) throw InputError("train_classifier: empty dataset");
    if (train.num_classes() != model.num_classes())
        throw InputError("train_classifier: dataset class count does not match model");
    if (!(train.image_shape() == model.input_shape()))
        throw InputError("train_classifier: image shape does not match model");
    if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0))
        throw InputError("train_classifier: bad config");

    initialize_parameters(model, derive_seed(config.seed, "init-root", 0));

    const int K = model.num_classes();
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const int pad = 2;
    Image scratch(model.input_shape());
    Trace tr;
    std::vector<double> logit_grad(static_cast<std::size_t>(K));
    auto grads = model.zero_param_grads();

    double epoch_loss = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        epoch_loss = 0.0;

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);

            double batch_loss = 0.0;
            for (std::size_t bi = start; bi < stop; ++bi) {
                const LabeledImage& item = train[order[bi]];
                const Image* x = &item.image;
                if (config.pad_crop || config.hflip) {
                    const int oy = config.pad_crop ? rng.below_int(2 * pad + 1) : pad;
                    const int ox = config.pad_crop ? rng.below_int(2 * pad + 1) : pad;
                    const bool mir = config.hflip && rng.below(2) == 1;
                    augment_into(item.image, scratch, pad, oy, ox, mir);
                    x = &scratch;
                }
                const std::vector<double> p = model.forward(*x, &tr);
                batch_loss -= std::log(p[item.label]);
                for (int k = 0; k < K; ++k)
                    logit_grad[k] = (p[k] - (k == item.label ? 1.0 : 0.0)) * inv_batch;
                model.backward(tr, logit_grad, &grads, nullptr);
            }
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss))
                throw TrainError("training diverged: non-finite loss in epoch " +
                                 std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(stop - start);

            auto& params = model.params();
            for (std::size_t li = 0; li < params.size(); ++li) {
                float* p = params[li].data();
                const double* g = grads[li].data();
                for (std::size_t j = 0; j < params[li].size(); ++j)
                    p[j] = static_cast<float>(static_cast<double>(p[j]) - config.learning_rate * g[j]);
            }
        }
        epoch_loss /= static_cast<double>(n);
        logging::debug("epoch %d mean loss %.4f", epoch, epoch_loss);
    }

    TrainStats stats;
    stats.final_epoch_loss = epoch_loss;
    stats.train_accuracy = evaluate_accuracy(model, train);
    return stats;
}

}  // namespace redbench::micronet
