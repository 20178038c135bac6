#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "redbench/micronet/model.hpp"
#include "redbench/tensor.hpp"

namespace redbench::red {

// Detection image sets, one vector per class index.
using ClassSets = std::vector<std::vector<Image>>;

struct EstimationParams {
    double target_fraction = 0.9;    // termination threshold on Q
    double step_size = 1e-4;         // L2 norm of every pattern update
    int max_iterations = 2000;       // per putative target
    std::uint64_t seed = 1;          // drives the stall-perturbation noise only
    double posterior_floor = 1e-12;  // lower clamp on p inside the objective
    double gradient_epsilon = 1e-12; // stall threshold on the gradient norm

    // Test instrumentation, invoked once per completed iteration with the
    // freshly stepped pattern, the weights Q was evaluated under, and Q.
    std::function<void(int iteration, const Tensor& v_new, const std::vector<double>& w_old,
                       double objective)>
        observer;
};

struct TraceEntry {
    double objective = 0.0;    // Q at (new v, old w)
    double temperature = 0.0;  // NaN unless the annealing branch ran
    double pattern_norm = 0.0;
    bool weight_reset = false; // Q = 0 branch fired this iteration
};

struct EstimationResult {
    int target = -1;
    Tensor pattern;
    std::vector<double> weights;  // length num_classes, weights[target] = 0
    int iterations = 0;
    bool converged = false;       // last recorded Q reached the threshold
    bool stalled = false;         // aborted after two consecutive zero gradients
    int weight_resets = 0;
    int screened_out = 0;         // detection images dropped as misclassified
    std::vector<TraceEntry> trace;
};

// Fraction of class-s images the model sends to t once v is embedded.
double misclassification_fraction(const micronet::ClassifierModel& model,
                                  const std::vector<Image>& class_images, const Tensor& v,
                                  int target);

// Q_t(v, w) = sum over s != t of w_s * q_st(v). Classes with zero weight are
// skipped; positive-weight classes must have images.
double weighted_objective(const micronet::ClassifierModel& model, const ClassSets& sets,
                          const Tensor& v, const std::vector<double>& weights, int target);

// Gradient of the weighted mean log-posterior of the target over the
// embedded images. Saturated pixels and images whose target posterior sits
// below the floor contribute nothing.
Tensor surrogate_gradient(const micronet::ClassifierModel& model, const ClassSets& sets,
                          const Tensor& v, const std::vector<double>& weights, int target,
                          double posterior_floor = 1e-12);

// One ascent step of exact L2 length delta along the normalized gradient.
struct StepResult {
    Tensor pattern;
    bool stalled = false;  // gradient norm at or below epsilon; pattern unchanged
};
StepResult pattern_step(const Tensor& v, const Tensor& gradient, double step_size,
                        double epsilon = 1e-12);

// T = -log Q for Q in (0, 1).
double schedule_temperature(double objective);

// w_s = exp(q_s / T) / sum over c != t of exp(q_c / T); w_t = 0. Computed
// with max-subtraction, so it is shift invariant in q.
std::vector<double> update_weights(const std::vector<double>& fractions, double temperature,
                                   int target);

// Joint pattern and weight estimation for putative target t over all other
// classes, annealed weights.
EstimationResult estimate_pattern_lred(const micronet::ClassifierModel& model,
                                       const ClassSets& sets, int target,
                                       const EstimationParams& params);

// Same loop with the weights pinned uniform over s != t.
EstimationResult estimate_pattern_ured(const micronet::ClassifierModel& model,
                                       const ClassSets& sets, int target,
                                       const EstimationParams& params);

// Per-pair variant: only class source drives the estimation (one-hot w).
EstimationResult estimate_pattern_pred(const micronet::ClassifierModel& model,
                                       const std::vector<Image>& source_images, int source,
                                       int target, const EstimationParams& params);

// Drops images the model misclassifies; returns the kept sets and the number
// dropped. Class index = position in the outer vector.
std::pair<ClassSets, int> screen_correctly_classified(const micronet::ClassifierModel& model,
                                                      const ClassSets& sets);

}  // namespace redbench::red
