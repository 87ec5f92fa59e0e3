#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cpq/rng.hpp"

namespace cpq {

using LabelId = std::int64_t;

// Known categorical distribution over label ids 0..m-1. Serves as the exact
// ground truth that the sampling-based estimators are checked against, and
// as the per-input answer distribution of synthetic tasks.
class DiscreteDistribution {
public:
    // Probabilities must be non-negative and sum to 1 within 1e-12.
    explicit DiscreteDistribution(std::vector<double> probabilities);

    std::size_t support_size() const noexcept { return probs_.size(); }
    double probability(std::size_t label) const { return probs_.at(label); }
    std::span<const double> probabilities() const noexcept { return probs_; }

private:
    std::vector<double> probs_;
};

DiscreteDistribution make_uniform(std::size_t m);

// Geometric with ratio (1-p), truncated to m atoms and renormalized.
DiscreteDistribution make_geometric(double p, std::size_t m);

// Expected probability mass on labels absent from t iid draws:
//   sum_j p_j (1 - p_j)^t.
// t = 0 gives 1 exactly.
double exact_missing_mass(const DiscreteDistribution& d, std::int64_t t);

// One-step change of the missing mass between t and t+1 draws:
//   -sum_j p_j^2 (1 - p_j)^t.
// Never positive, and non-decreasing in t (each extra draw helps less).
double exact_derivative(const DiscreteDistribution& d, std::int64_t t);

LabelId sample(const DiscreteDistribution& d, RngState& rng);

} // namespace cpq
