#include "cpq/distribution.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "cpq/error.hpp"

namespace cpq {

namespace {

// Compensated accumulator. Plain summation drifts past 1e-12 on supports in
// the 10^4+ range, which would violate the telescoping identity checks.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

} // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> probabilities)
    : probs_(std::move(probabilities)) {
    if (probs_.empty())
        throw Error(ErrorKind::invalid_parameter, "distribution needs at least one atom");
    KahanSum total;
    for (double p : probs_) {
        if (!(p >= 0.0))
            throw Error(ErrorKind::invalid_parameter,
                        "negative probability " + std::to_string(p));
        total.add(p);
    }
    if (std::fabs(total.sum - 1.0) > 1e-12)
        throw Error(ErrorKind::invalid_parameter,
                    "probabilities sum to " + std::to_string(total.sum) + ", not 1");
}

DiscreteDistribution make_uniform(std::size_t m) {
    if (m == 0)
        throw Error(ErrorKind::invalid_parameter, "uniform support size must be positive");
    return DiscreteDistribution(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

DiscreteDistribution make_geometric(double p, std::size_t m) {
    if (!(p > 0.0) || !(p < 1.0))
        throw Error(ErrorKind::invalid_parameter,
                    "geometric parameter must lie in (0, 1), got " + std::to_string(p));
    if (m == 0)
        throw Error(ErrorKind::invalid_parameter, "geometric support size must be positive");
    std::vector<double> probs(m);
    KahanSum total;
    double w = p;
    for (std::size_t i = 0; i < m; ++i) {
        probs[i] = w;
        total.add(w);
        w *= 1.0 - p;
    }
    for (double& q : probs) q /= total.sum;
    // Renormalization leaves a last-ulp residue; pin the sum exactly.
    KahanSum check;
    for (double q : probs) check.add(q);
    probs[0] += 1.0 - check.sum;
    return DiscreteDistribution(std::move(probs));
}

double exact_missing_mass(const DiscreteDistribution& d, std::int64_t t) {
    if (t < 0) throw Error(ErrorKind::invalid_parameter, "t must be non-negative");
    // Before any draw the whole mass is missing. Summing the stored doubles
    // would land within an ulp of 1 rather than on it.
    if (t == 0) return 1.0;
    KahanSum acc;
    for (double p : d.probabilities())
        acc.add(p * std::pow(1.0 - p, static_cast<double>(t)));
    return acc.sum;
}

double exact_derivative(const DiscreteDistribution& d, std::int64_t t) {
    if (t < 0) throw Error(ErrorKind::invalid_parameter, "t must be non-negative");
    KahanSum acc;
    for (double p : d.probabilities())
        acc.add(p * p * std::pow(1.0 - p, static_cast<double>(t)));
    return -acc.sum;
}

LabelId sample(const DiscreteDistribution& d, RngState& rng) {
    const double u = uniform_unit(rng);
    double cum = 0.0;
    const auto probs = d.probabilities();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<LabelId>(i);
    }
    // Roundoff can leave cum slightly under 1; fall back to the last atom
    // with non-zero mass.
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return static_cast<LabelId>(i);
    return static_cast<LabelId>(probs.size() - 1);
}

} // namespace cpq
