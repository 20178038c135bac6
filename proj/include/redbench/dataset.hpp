#pragma once

#include <vector>

#include "redbench/errors.hpp"
#include "redbench/tensor.hpp"

namespace redbench {

struct LabeledImage {
    Image image;
    int label = 0;
};

// Labeled image collection with class labels in {0..num_classes-1}.
class LabeledDataset {
  public:
    LabeledDataset() = default;
    LabeledDataset(int num_classes, Shape image_shape)
        : num_classes_(num_classes), image_shape_(image_shape) {
        if (num_classes < 1) throw InputError("LabeledDataset: num_classes must be >= 1");
    }

    int num_classes() const { return num_classes_; }
    const Shape& image_shape() const { return image_shape_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    const LabeledImage& operator[](std::size_t i) const { return items_[i]; }
    const std::vector<LabeledImage>& items() const { return items_; }

    void add(Image image, int label) {
        if (label < 0 || label >= num_classes_)
            throw InputError("LabeledDataset: label out of range");
        if (!(image.shape() == image_shape_))
            throw InputError("LabeledDataset: image shape mismatch");
        items_.push_back({std::move(image), label});
    }
    void add(LabeledImage item) { add(std::move(item.image), item.label); }

    // Indices of the items labeled s (the per-class view D_s).
    std::vector<std::size_t> class_indices(int label) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < items_.size(); ++i)
            if (items_[i].label == label) out.push_back(i);
        return out;
    }

    std::vector<Image> class_images(int label) const {
        std::vector<Image> out;
        for (const auto& item : items_)
            if (item.label == label) out.push_back(item.image);
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes_, 0);
        for (const auto& item : items_) ++counts[item.label];
        return counts;
    }

    bool covers_all_classes() const {
        const auto counts = class_counts();
        for (auto c : counts)
            if (c == 0) return false;
        return true;
    }

  private:
    int num_classes_ = 0;
    Shape image_shape_;
    std::vector<LabeledImage> items_;
};

}  // namespace redbench
