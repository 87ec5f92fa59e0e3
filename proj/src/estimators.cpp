#include "cpq/estimators.hpp"

#include <algorithm>

#include "cpq/error.hpp"

namespace cpq {

namespace {

double clip01(double x, bool enabled) {
    if (!enabled) return x;
    return std::min(1.0, std::max(0.0, x));
}

} // namespace

double gt_missing_mass(const Tally& tally, const EstimatorConfig& config) {
    const std::int64_t t = tally.total();
    if (t == 0)
        throw Error(ErrorKind::undefined_estimate, "missing-mass estimate needs samples");
    const double raw = static_cast<double>(tally.singletons()) / static_cast<double>(t);
    return clip01(raw, config.clip_to_unit);
}

double gt_derivative(const Tally& tally) {
    const std::int64_t t = tally.total();
    if (t == 0)
        throw Error(ErrorKind::undefined_estimate, "derivative estimate needs samples");
    const double td = static_cast<double>(t);
    return -2.0 * static_cast<double>(tally.doubletons()) / (td * td);
}

double naive_derivative(double prev_mm, double next_mm) {
    return next_mm - prev_mm;
}

double gt_seen_probability(const Tally& tally, LabelId y, const EstimatorConfig& config) {
    const std::int64_t r = tally.count(y);
    if (r == 0)
        throw Error(ErrorKind::unknown_label,
                    "label " + std::to_string(y) + " not in tally");
    const std::int64_t t = tally.total();
    const std::int64_t n_r = tally.freq_of_freq(r);
    const std::int64_t n_r1 = tally.freq_of_freq(r + 1);
    if (n_r > 0 && n_r1 > 0) {
        const double est = (static_cast<double>(r + 1) / static_cast<double>(t)) *
                           (static_cast<double>(n_r1) / static_cast<double>(n_r));
        return clip01(est, config.clip_to_unit);
    }
    switch (config.gt_fallback) {
    case GtFallback::empirical_frequency:
        return static_cast<double>(r) / static_cast<double>(t);
    case GtFallback::skip:
        return 0.0;
    }
    return 0.0;
}

LabelProbabilities label_probabilities(const Tally& tally, const EstimatorConfig& config) {
    const std::int64_t t = tally.total();
    if (t == 0)
        throw Error(ErrorKind::undefined_estimate, "label probabilities need samples");

    LabelProbabilities out;
    out.ee_mass = gt_missing_mass(tally, config);

    double raw_sum = 0.0;
    for (const auto& [label, count] : tally.counts()) {
        const double w = gt_seen_probability(tally, label, config);
        out.seen[label] = w;
        raw_sum += w;
    }
    if (raw_sum == 0.0) {
        for (auto& [label, w] : out.seen)
            w = static_cast<double>(tally.count(label)) / static_cast<double>(t);
        raw_sum = 1.0;
    }

    if (config.normalization == SeenNormalization::scale_seen_to_complement) {
        const double scale = (1.0 - out.ee_mass) / raw_sum;
        for (auto& [label, w] : out.seen) w *= scale;
    }
    return out;
}

} // namespace cpq
