#include "redbench/red/red.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "redbench/attacks/attacks.hpp"
#include "redbench/errors.hpp"
#include "redbench/log.hpp"
#include "redbench/rng.hpp"

namespace redbench::red {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate_params(const EstimationParams& p) {
    if (!(p.target_fraction > 0.0) || !(p.target_fraction < 1.0))
        throw InputError("target fraction must lie in (0,1)");
    if (!(p.step_size > 0.0) || !std::isfinite(p.step_size))
        throw InputError("step size must be positive and finite");
    if (p.max_iterations < 1) throw InputError("max iterations must be at least 1");
    if (p.posterior_floor < 0.0 || p.gradient_epsilon < 0.0)
        throw InputError("floors must be non-negative");
}

void validate_weights(const std::vector<double>& w, int num_classes, int target) {
    if (static_cast<int>(w.size()) != num_classes)
        throw InputError("weight vector length does not match the class count");
    if (w[target] != 0.0) throw InputError("target weight must be zero");
    double sum = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw InputError("weights must be non-negative");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InputError("weights must sum to 1");
}

int argmax_lowest(const std::vector<double>& p) {
    int best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[best]) best = static_cast<int>(k);
    return best;
}

struct WorkItem {
    const Image* image = nullptr;
    int cls = -1;
    Image embedded;
    std::vector<std::uint8_t> saturated;
    micronet::Trace trace;
};

// Embeds v into every item, runs the forwards, and fills q with the
// per-class fractions sent to the target.
void forward_all(const micronet::ClassifierModel& model, std::vector<WorkItem>& items,
                 const Tensor& v, int target, const std::vector<int>& class_counts,
                 std::vector<double>& q) {
    std::fill(q.begin(), q.end(), 0.0);
    for (WorkItem& it : items) {
        const double* x = it.image->data();
        const double* dv = v.data();
        double* e = it.embedded.data();
        for (std::size_t i = 0; i < it.image->size(); ++i) {
            const double s = x[i] + dv[i];
            it.saturated[i] = (s < 0.0 || s > 1.0) ? 1 : 0;
            e[i] = std::clamp(s, 0.0, 1.0);
        }
        model.forward(it.embedded, &it.trace);
        if (argmax_lowest(it.trace.acts.back()) == target) q[it.cls] += 1.0;
    }
    for (std::size_t s = 0; s < q.size(); ++s)
        if (class_counts[s] > 0) q[s] /= static_cast<double>(class_counts[s]);
}

// Ascent direction at the items' current traces under weights w.
Tensor gradient_from_traces(const micronet::ClassifierModel& model, std::vector<WorkItem>& items,
                            const std::vector<double>& w, const std::vector<int>& class_counts,
                            int target, double posterior_floor, Tensor& scratch) {
    Tensor acc(model.input_shape());
    std::vector<double> logit_grad(static_cast<std::size_t>(model.num_classes()));
    for (WorkItem& it : items) {
        const double ws = w[it.cls];
        if (ws == 0.0) continue;
        const std::vector<double>& p = it.trace.acts.back();
        if (p[target] < posterior_floor) continue;
        for (std::size_t k = 0; k < p.size(); ++k)
            logit_grad[k] = (static_cast<int>(k) == target ? 1.0 : 0.0) - p[k];
        model.backward(it.trace, logit_grad, nullptr, &scratch);
        const double scale = ws / static_cast<double>(class_counts[it.cls]);
        double* a = acc.data();
        const double* g = scratch.data();
        for (std::size_t i = 0; i < acc.size(); ++i)
            if (!it.saturated[i]) a[i] += scale * g[i];
    }
    return acc;
}

enum class WeightPolicy { kAnnealed, kFixed };

EstimationResult estimate_core(const micronet::ClassifierModel& model, const ClassSets& sets,
                               const std::vector<int>& active, int target,
                               const EstimationParams& params, WeightPolicy policy) {
    validate_params(params);
    const int K = model.num_classes();
    if (target < 0 || target >= K) throw InputError("putative target out of range");
    if (static_cast<int>(sets.size()) != K)
        throw InputError("expected one detection set per class");
    if (active.empty()) throw InputError("no source classes to estimate from");
    if (policy == WeightPolicy::kAnnealed && static_cast<int>(active.size()) != K - 1)
        throw InputError("annealed weights require every non-target class");

    EstimationResult result;
    result.target = target;

    // Misclassified detection images violate the screening assumption; drop
    // them here so callers that pre-screen see no change.
    std::vector<WorkItem> items;
    std::vector<int> class_counts(static_cast<std::size_t>(K), 0);
    for (int s : active) {
        if (s < 0 || s >= K || s == target) throw InputError("bad source class index");
        if (sets[s].empty())
            throw InputError("class " + std::to_string(s) + " has no detection images");
        int kept = 0;
        for (const Image& img : sets[s]) {
            if (!(img.shape() == model.input_shape()))
                throw InputError("detection image shape does not match the model");
            if (micronet::classify(model, img) != s) {
                ++result.screened_out;
                continue;
            }
            WorkItem it;
            it.image = &img;
            it.cls = s;
            it.embedded = Image(model.input_shape());
            it.saturated.assign(img.size(), 0);
            items.push_back(std::move(it));
            ++kept;
        }
        if (kept == 0)
            throw InputError("class " + std::to_string(s) +
                             " has no correctly classified detection images");
        class_counts[s] = kept;
    }
    if (result.screened_out > 0)
        logging::info("target %d: dropped %d misclassified detection image(s)", target,
                      result.screened_out);

    Tensor v(model.input_shape());
    std::vector<double> w(static_cast<std::size_t>(K), 0.0);
    for (int s : active) w[s] = 1.0 / static_cast<double>(active.size());
    const std::vector<double> w_uniform = w;

    std::vector<double> q(static_cast<std::size_t>(K), 0.0);
    Tensor scratch(model.input_shape());
    forward_all(model, items, v, target, class_counts, q);

    int stall_streak = 0;
    for (int iter = 1; iter <= params.max_iterations; ++iter) {
        Tensor g = gradient_from_traces(model, items, w, class_counts, target,
                                        params.posterior_floor, scratch);
        const double gn = l2_norm(g);
        if (!std::isfinite(gn)) throw NumericError("non-finite estimation gradient");

        Tensor step(model.input_shape());
        if (gn <= params.gradient_epsilon) {
            ++stall_streak;
            if (stall_streak >= 2) {
                result.stalled = true;
                logging::info("target %d: aborting on repeated gradient stall at iteration %d",
                              target, iter);
                break;
            }
            logging::info("target %d: gradient stall at iteration %d, perturbing", target, iter);
            Rng rng(derive_seed(params.seed, "stall", static_cast<std::uint64_t>(iter)));
            double nn = 0.0;
            do {
                for (double& x : step.values()) x = rng.normal();
                nn = l2_norm(step);
            } while (nn == 0.0);
            const double scale = params.step_size / nn;
            for (double& x : step.values()) x *= scale;
        } else {
            stall_streak = 0;
            const double scale = params.step_size / gn;
            for (std::size_t i = 0; i < step.size(); ++i)
                step.data()[i] = scale * g.data()[i];
        }

        const double sn = l2_norm(step);
        if (std::abs(sn - params.step_size) > 1e-7)
            throw NumericError("pattern update norm drifted from the step size");
        for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += step.data()[i];

        forward_all(model, items, v, target, class_counts, q);
        double objective = 0.0;
        for (int s : active) objective += w[s] * q[s];
        if (params.observer) params.observer(iter, v, w, objective);

        TraceEntry entry;
        entry.objective = objective;
        entry.temperature = kNaN;
        entry.pattern_norm = l2_norm(v);
        ++result.iterations;

        if (objective >= params.target_fraction) {
            result.converged = true;
            result.trace.push_back(entry);
            break;
        }
        if (policy == WeightPolicy::kAnnealed) {
            if (objective <= 0.0) {
                w = w_uniform;
                entry.weight_reset = true;
                ++result.weight_resets;
            } else {
                const double temperature = schedule_temperature(objective);
                entry.temperature = temperature;
                w = update_weights(q, temperature, target);
            }
        }
        double wsum = 0.0;
        for (double x : w) {
            if (!(x >= 0.0)) throw NumericError("weight went negative");
            wsum += x;
        }
        if (w[target] != 0.0 || std::abs(wsum - 1.0) > 1e-9)
            throw NumericError("weight simplex invariant violated");
        result.trace.push_back(entry);
    }

    result.pattern = std::move(v);
    result.weights = std::move(w);
    return result;
}

}  // namespace

double misclassification_fraction(const micronet::ClassifierModel& model,
                                  const std::vector<Image>& class_images, const Tensor& v,
                                  int target) {
    if (class_images.empty()) throw InputError("misclassification fraction over an empty set");
    if (target < 0 || target >= model.num_classes())
        throw InputError("target class out of range");
    std::size_t hits = 0;
    for (const Image& x : class_images)
        if (micronet::classify(model, attacks::embed(x, v)) == target) ++hits;
    return static_cast<double>(hits) / static_cast<double>(class_images.size());
}

double weighted_objective(const micronet::ClassifierModel& model, const ClassSets& sets,
                          const Tensor& v, const std::vector<double>& weights, int target) {
    const int K = model.num_classes();
    if (static_cast<int>(sets.size()) != K)
        throw InputError("expected one detection set per class");
    if (target < 0 || target >= K) throw InputError("target class out of range");
    validate_weights(weights, K, target);
    double objective = 0.0;
    for (int s = 0; s < K; ++s) {
        if (s == target || weights[s] == 0.0) continue;
        objective += weights[s] * misclassification_fraction(model, sets[s], v, target);
    }
    return objective;
}

Tensor surrogate_gradient(const micronet::ClassifierModel& model, const ClassSets& sets,
                          const Tensor& v, const std::vector<double>& weights, int target,
                          double posterior_floor) {
    const int K = model.num_classes();
    if (static_cast<int>(sets.size()) != K)
        throw InputError("expected one detection set per class");
    if (target < 0 || target >= K) throw InputError("target class out of range");
    validate_weights(weights, K, target);

    Tensor acc(model.input_shape());
    Tensor gimg(model.input_shape());
    micronet::Trace trace;
    std::vector<double> logit_grad(static_cast<std::size_t>(K));
    Image embedded(model.input_shape());
    std::vector<std::uint8_t> saturated(embedded.size());

    for (int s = 0; s < K; ++s) {
        if (s == target || weights[s] == 0.0) continue;
        if (sets[s].empty())
            throw InputError("class " + std::to_string(s) +
                             " carries weight but has no detection images");
        const double scale = weights[s] / static_cast<double>(sets[s].size());
        for (const Image& x : sets[s]) {
            if (!(x.shape() == model.input_shape()))
                throw InputError("detection image shape does not match the model");
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double sum = x.data()[i] + v.data()[i];
                saturated[i] = (sum < 0.0 || sum > 1.0) ? 1 : 0;
                embedded.data()[i] = std::clamp(sum, 0.0, 1.0);
            }
            const std::vector<double> p = model.forward(embedded, &trace);
            if (p[target] < posterior_floor) continue;
            for (std::size_t k = 0; k < p.size(); ++k)
                logit_grad[k] = (static_cast<int>(k) == target ? 1.0 : 0.0) - p[k];
            model.backward(trace, logit_grad, nullptr, &gimg);
            for (std::size_t i = 0; i < acc.size(); ++i)
                if (!saturated[i]) acc.data()[i] += scale * gimg.data()[i];
        }
    }
    return acc;
}

StepResult pattern_step(const Tensor& v, const Tensor& gradient, double step_size,
                        double epsilon) {
    if (!v.same_shape(gradient)) throw InputError("pattern and gradient shapes differ");
    if (!(step_size > 0.0)) throw InputError("step size must be positive");
    if (!all_finite(gradient)) throw InputError("gradient has non-finite entries");
    StepResult out;
    const double gn = l2_norm(gradient);
    if (gn <= epsilon) {
        out.pattern = v;
        out.stalled = true;
        return out;
    }
    out.pattern = Tensor(v.shape());
    const double scale = step_size / gn;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.pattern.data()[i] = v.data()[i] + scale * gradient.data()[i];
    return out;
}

double schedule_temperature(double objective) {
    if (!(objective > 0.0) || !(objective < 1.0))
        throw InputError("temperature schedule needs an objective in (0,1)");
    return -std::log(objective);
}

std::vector<double> update_weights(const std::vector<double>& fractions, double temperature,
                                   int target) {
    const int K = static_cast<int>(fractions.size());
    if (K < 2) throw InputError("need at least two classes");
    if (target < 0 || target >= K) throw InputError("target class out of range");
    if (!(temperature > 0.0)) throw InputError("temperature must be positive");

    double mx = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < K; ++s)
        if (s != target) mx = std::max(mx, fractions[s]);
    std::vector<double> w(fractions.size(), 0.0);
    double denom = 0.0;
    for (int s = 0; s < K; ++s) {
        if (s == target) continue;
        w[s] = std::exp((fractions[s] - mx) / temperature);
        denom += w[s];
    }
    for (int s = 0; s < K; ++s)
        if (s != target) w[s] /= denom;
    return w;
}

EstimationResult estimate_pattern_lred(const micronet::ClassifierModel& model,
                                       const ClassSets& sets, int target,
                                       const EstimationParams& params) {
    std::vector<int> active;
    for (int s = 0; s < model.num_classes(); ++s)
        if (s != target) active.push_back(s);
    return estimate_core(model, sets, active, target, params, WeightPolicy::kAnnealed);
}

EstimationResult estimate_pattern_ured(const micronet::ClassifierModel& model,
                                       const ClassSets& sets, int target,
                                       const EstimationParams& params) {
    std::vector<int> active;
    for (int s = 0; s < model.num_classes(); ++s)
        if (s != target) active.push_back(s);
    return estimate_core(model, sets, active, target, params, WeightPolicy::kFixed);
}

EstimationResult estimate_pattern_pred(const micronet::ClassifierModel& model,
                                       const std::vector<Image>& source_images, int source,
                                       int target, const EstimationParams& params) {
    if (source == target) throw InputError("source and target must differ");
    if (source < 0 || source >= model.num_classes()) throw InputError("source class out of range");
    ClassSets sets(static_cast<std::size_t>(model.num_classes()));
    sets[source] = source_images;
    return estimate_core(model, sets, {source}, target, params, WeightPolicy::kFixed);
}

std::pair<ClassSets, int> screen_correctly_classified(const micronet::ClassifierModel& model,
                                                      const ClassSets& sets) {
    ClassSets kept(sets.size());
    int dropped = 0;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        kept[s].reserve(sets[s].size());
        for (const Image& img : sets[s]) {
            if (micronet::classify(model, img) == static_cast<int>(s))
                kept[s].push_back(img);
            else
                ++dropped;
        }
    }
    return {std::move(kept), dropped};
}

}  // namespace redbench::red
