#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "redbench/errors.hpp"

namespace redbench {

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    bool operator==(const Shape&) const = default;
    std::size_t size() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
};

// Dense (C,H,W) tensor of doubles. Images hold intensities in [0,1];
// perturbations and gradients are unconstrained.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(shape), data_(shape.size(), fill) {}
    Tensor(int c, int h, int w, double fill = 0.0) : Tensor(Shape{c, h, w}, fill) {}

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    double& at(int c, int h, int w) {
        return data_[(static_cast<std::size_t>(c) * shape_.height + h) * shape_.width + w];
    }
    double at(int c, int h, int w) const {
        return data_[(static_cast<std::size_t>(c) * shape_.height + h) * shape_.width + w];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor&) const = default;

  private:
    Shape shape_;
    std::vector<double> data_;
};

using Image = Tensor;

inline double l2_norm(const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return std::sqrt(acc);
}

inline std::size_t l0_count(const Tensor& t) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] != 0.0) ++n;
    return n;
}

inline double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InputError("dot: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw InputError("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

inline bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

inline bool within_unit_interval(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] < 0.0 || t[i] > 1.0) return false;
    return true;
}

}  // namespace redbench
