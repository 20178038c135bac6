#include "redbench/anomaly/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "redbench/errors.hpp"
#include "redbench/log.hpp"

namespace redbench::anomaly {

DetectionStatistics detection_statistics(const std::vector<double>& pattern_norms) {
    if (pattern_norms.size() < 3)
        throw InputError("need at least 3 per-target norms for the null fit");
    DetectionStatistics stats;
    stats.norms = pattern_norms;
    stats.r.reserve(pattern_norms.size());
    for (double n : pattern_norms) {
        if (!(n > 0.0) || !std::isfinite(n))
            throw InputError("pattern norms must be positive and finite");
        stats.r.push_back(1.0 / n);
    }
    stats.max_index = 0;
    for (std::size_t i = 1; i < stats.r.size(); ++i)
        if (stats.r[i] > stats.r[stats.max_index]) stats.max_index = static_cast<int>(i);
    return stats;
}

DetectionStatistics detection_statistics(const std::vector<red::EstimationResult>& results) {
    std::vector<double> norms;
    norms.reserve(results.size());
    for (const auto& res : results) norms.push_back(l2_norm(res.pattern));
    return detection_statistics(norms);
}

double gamma_log_likelihood(const std::vector<double>& values, double alpha, double scale) {
    double ll = 0.0;
    for (double x : values)
        ll += (alpha - 1.0) * std::log(x) - x / scale;
    ll -= static_cast<double>(values.size()) *
          (alpha * std::log(scale) + std::lgamma(alpha));
    return ll;
}

void gamma_log_likelihood_gradient(const std::vector<double>& values, double alpha, double scale,
                                   double* d_alpha, double* d_scale) {
    const double n = static_cast<double>(values.size());
    double sum_log = 0.0, sum = 0.0;
    for (double x : values) {
        sum_log += std::log(x);
        sum += x;
    }
    if (d_alpha)
        *d_alpha = sum_log - n * (std::log(scale) + boost::math::digamma(alpha));
    if (d_scale) *d_scale = sum / (scale * scale) - n * alpha / scale;
}

GammaFit fit_gamma_null(const std::vector<double>& values) {
    if (values.size() < 2) throw InputError("gamma fit needs at least 2 values");
    double sum = 0.0, sum_log = 0.0;
    for (double x : values) {
        if (!(x > 0.0) || !std::isfinite(x))
            throw InputError("gamma fit values must be positive and finite");
        sum += x;
        sum_log += std::log(x);
    }
    const double n = static_cast<double>(values.size());
    const double mean = sum / n;
    const double mean_log = sum_log / n;
    const double s = std::log(mean) - mean_log;  // >= 0, zero iff all equal
    if (!(s > 1e-12))
        throw DegenerateFitError("zero spread: gamma fit is unidentifiable");

    // Moment-style initializer, then Newton on f(a) = log(a) - psi(a) - s,
    // which is strictly decreasing on (0, inf).
    double alpha = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
        const double f = std::log(alpha) - boost::math::digamma(alpha) - s;
        if (f > 0.0)
            lo = alpha;  // root lies above
        else
            hi = alpha;
        const double fp = 1.0 / alpha - boost::math::trigamma(alpha);
        double next = alpha - f / fp;
        if (!(next > lo) || !(next < hi))
            next = std::isinf(hi) ? alpha * 2.0 : 0.5 * (lo + hi);
        const double delta = std::abs(next - alpha);
        alpha = next;
        if (delta < 1e-10) {
            GammaFit fit;
            fit.alpha = alpha;
            fit.scale = mean / alpha;
            fit.log_likelihood = gamma_log_likelihood(values, fit.alpha, fit.scale);
            if (!std::isfinite(fit.alpha) || !std::isfinite(fit.scale) || fit.alpha <= 0.0 ||
                fit.scale <= 0.0)
                throw NumericError("gamma fit produced invalid parameters");
            return fit;
        }
    }
    throw NumericError("gamma fit Newton iteration did not converge");
}

PValue order_statistic_pvalue(const GammaFit& fit, double r_max, int num_classes) {
    if (!(r_max > 0.0)) throw InputError("r_max must be positive");
    if (num_classes < 1) throw InputError("need at least one class");
    if (!(fit.alpha > 0.0) || !(fit.scale > 0.0)) throw InputError("invalid gamma fit");

    // 1 - G^K with G^K evaluated as exp(K * log(1 - Q)), Q the upper tail.
    const double upper = boost::math::gamma_q(fit.alpha, r_max / fit.scale);
    PValue out;
    if (upper >= 1.0) {
        out.value = 1.0;
        return out;
    }
    const double log_g = std::log1p(-upper);
    out.value = -std::expm1(static_cast<double>(num_classes) * log_g);
    if (out.value <= 0.0) {
        out.value = std::numeric_limits<double>::denorm_min();
        out.underflow = true;
    }
    if (out.value > 1.0) out.value = 1.0;
    return out;
}

DetectionReport decide(const PValue& pv, double phi, DetectionStatistics statistics) {
    if (!(phi > 0.0) || !(phi < 1.0)) throw InputError("phi must lie in (0,1)");
    DetectionReport report;
    report.statistics = std::move(statistics);
    report.pv = pv.value;
    report.underflow = pv.underflow;
    report.phi = phi;
    report.attack = pv.value < phi;
    if (report.attack) report.inferred_target = report.statistics.max_index;
    return report;
}

DetectionReport analyze(const std::vector<double>& pattern_norms, double phi) {
    DetectionStatistics stats = detection_statistics(pattern_norms);
    std::vector<double> null_values;
    null_values.reserve(stats.r.size() - 1);
    for (std::size_t i = 0; i < stats.r.size(); ++i)
        if (static_cast<int>(i) != stats.max_index) null_values.push_back(stats.r[i]);

    try {
        const GammaFit fit = fit_gamma_null(null_values);
        const PValue pv =
            order_statistic_pvalue(fit, stats.r[stats.max_index],
                                   static_cast<int>(stats.r.size()));
        DetectionReport report = decide(pv, phi, std::move(stats));
        report.fit = fit;
        return report;
    } catch (const DegenerateFitError& e) {
        logging::warn("null fit degenerated (%s); reporting no attack", e.what());
        DetectionReport report;
        report.statistics = std::move(stats);
        report.phi = phi;
        report.pv = 1.0;
        report.attack = false;
        report.degenerate_fit = true;
        return report;
    }
}

}  // namespace redbench::anomaly
