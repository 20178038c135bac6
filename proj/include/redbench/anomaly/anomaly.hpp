#pragma once

#include <optional>
#include <vector>

#include "redbench/red/red.hpp"

namespace redbench::anomaly {

struct DetectionStatistics {
    std::vector<double> norms;  // per putative target, L2 norm of the pattern
    std::vector<double> r;      // reciprocals
    int max_index = -1;         // ties broken toward the lowest class index
};

// Shape/scale parameterization.
struct GammaFit {
    double alpha = 0.0;
    double scale = 0.0;
    double log_likelihood = 0.0;
};

struct PValue {
    double value = 1.0;
    bool underflow = false;
};

struct DetectionReport {
    DetectionStatistics statistics;
    std::optional<GammaFit> fit;  // absent when the null fit degenerated
    double pv = 1.0;
    bool underflow = false;
    double phi = 0.05;
    bool attack = false;
    std::optional<int> inferred_target;  // present iff attack
    bool degenerate_fit = false;
};

DetectionStatistics detection_statistics(const std::vector<double>& pattern_norms);
DetectionStatistics detection_statistics(const std::vector<red::EstimationResult>& results);

// MLE for Gamma(alpha, scale): alpha solves
//   log(alpha) - digamma(alpha) = log(mean) - mean(log values)
// by safeguarded Newton from the moment initializer; scale = mean / alpha.
// Throws DegenerateFitError when the values carry no spread.
GammaFit fit_gamma_null(const std::vector<double>& values);

// pv = 1 - G(r_max)^K under the fitted null, evaluated in log space. A value
// that would round to zero comes back as the smallest positive double with
// the underflow flag set.
PValue order_statistic_pvalue(const GammaFit& fit, double r_max, int num_classes);

// Strict threshold: attack iff pv < phi.
DetectionReport decide(const PValue& pv, double phi, DetectionStatistics statistics);

// Full pipeline over the K estimated pattern norms: statistics, null fit
// excluding the max, p-value, decision. A degenerate fit maps to "no attack".
DetectionReport analyze(const std::vector<double>& pattern_norms, double phi);

// Gamma log-likelihood and its gradient, exposed for optimality checks.
double gamma_log_likelihood(const std::vector<double>& values, double alpha, double scale);
void gamma_log_likelihood_gradient(const std::vector<double>& values, double alpha, double scale,
                                   double* d_alpha, double* d_scale);

}  // namespace redbench::anomaly
