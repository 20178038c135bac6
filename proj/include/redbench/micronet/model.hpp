#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redbench/dataset.hpp"
#include "redbench/tensor.hpp"

namespace redbench::micronet {

enum class LayerKind : std::uint8_t {
    kConv = 1,      // 3x3-style convolution, stride 1, zero padding
    kRelu = 2,
    kMaxPool = 3,   // square window, stride = window
    kDense = 4,     // flattens its input implicitly
    kSoftmax = 5,   // must be the final layer
    kScale = 6,     // fixed elementwise (x - shift) * gain, no parameters
};

struct LayerSpec {
    LayerKind kind = LayerKind::kRelu;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int pad = 0;
    int window = 0;
    int in_dim = 0;
    int out_dim = 0;
    double shift = 0.0;
    double gain = 1.0;

    static LayerSpec conv(int in_channels, int out_channels, int kernel, int pad) {
        LayerSpec s;
        s.kind = LayerKind::kConv;
        s.in_channels = in_channels;
        s.out_channels = out_channels;
        s.kernel = kernel;
        s.pad = pad;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{LayerKind::kRelu}; }
    static LayerSpec maxpool(int window) {
        LayerSpec s;
        s.kind = LayerKind::kMaxPool;
        s.window = window;
        return s;
    }
    static LayerSpec dense(int in_dim, int out_dim) {
        LayerSpec s;
        s.kind = LayerKind::kDense;
        s.in_dim = in_dim;
        s.out_dim = out_dim;
        return s;
    }
    static LayerSpec softmax() { return LayerSpec{LayerKind::kSoftmax}; }
    static LayerSpec scale(double shift, double gain) {
        LayerSpec s;
        s.kind = LayerKind::kScale;
        s.shift = shift;
        s.gain = gain;
        return s;
    }

    bool operator==(const LayerSpec&) const = default;
};

// Per-forward activation record, reusable across calls to avoid reallocation.
// acts[0] is the (flattened) input; acts[i+1] is the output of layer i.
struct Trace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<int>> pool_argmax;  // parallel to layers; empty for non-pool layers
};

// Differentiable classifier: an ordered layer list ending in softmax, with
// float32 parameter storage and float64 evaluation.
class ClassifierModel {
  public:
    ClassifierModel() = default;
    ClassifierModel(Shape input_shape, std::vector<LayerSpec> arch);

    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& arch() const { return arch_; }
    int num_classes() const { return num_classes_; }

    std::vector<std::vector<float>>& params() { return params_; }
    const std::vector<std::vector<float>>& params() const { return params_; }
    std::size_t total_param_count() const;

    // Output shape after each layer ({n,1,1} once the data is flat).
    const std::vector<Shape>& boundary_shapes() const { return boundary_shapes_; }

    // Posterior p(.|x; theta), length K, entries summing to 1.
    // Throws InputError on shape mismatch and NumericError (naming the layer)
    // if an activation goes non-finite.
    std::vector<double> forward(const Image& image, Trace* trace = nullptr) const;

    // Backpropagation from a gradient at the logits (the softmax input).
    // Either output may be null. param_grads must match the layer layout and
    // is accumulated into.
    void backward(const Trace& trace, const std::vector<double>& logit_grad,
                  std::vector<std::vector<double>>* param_grads, Tensor* input_grad) const;

    std::vector<std::vector<double>> zero_param_grads() const;

    bool same_architecture(const ClassifierModel& other) const {
        return input_shape_ == other.input_shape_ && arch_ == other.arch_;
    }

  private:
    Shape input_shape_;
    std::vector<LayerSpec> arch_;
    std::vector<Shape> boundary_shapes_;
    std::vector<std::vector<float>> params_;
    int num_classes_ = 0;
};

// Argmax of the posterior; ties resolve to the lowest class index.
int classify(const ClassifierModel& model, const Image& image);

// d/dx log p(class_index | x; theta), shape (C,H,W).
Tensor input_log_posterior_gradient(const ClassifierModel& model, const Image& image,
                                    int class_index);

// Fraction of items whose argmax posterior equals the label.
double evaluate_accuracy(const ClassifierModel& model, const LabeledDataset& dataset);

// Named architecture presets ("cnn-small", "cnn-tiny", "mlp", "linear").
std::vector<LayerSpec> make_architecture(const std::string& name, Shape input_shape,
                                         int num_classes);

}  // namespace redbench::micronet
