#pragma once

#include <map>

#include "cpq/tally.hpp"

namespace cpq {

// Behavior of gt_seen_probability when the frequency ratio it needs is
// undefined (no label of the next-higher frequency class).
enum class GtFallback {
    empirical_frequency, // use count/total instead
    skip,                // contribute a zero raw weight
};

enum class SeenNormalization {
    scale_seen_to_complement, // rescale seen weights to sum to 1 - ee_mass
    none,                     // leave raw weights untouched
};

struct EstimatorConfig {
    GtFallback gt_fallback = GtFallback::empirical_frequency;
    bool clip_to_unit = true;
    SeenNormalization normalization = SeenNormalization::scale_seen_to_complement;
};

// Probability assignment over the labels of one input: a weight per seen
// label plus the mass reserved for everything-else. Under the default
// normalization the weights and ee_mass sum to 1.
struct LabelProbabilities {
    std::map<LabelId, double> seen;
    double ee_mass = 1.0;
};

// Fraction of singletons, the classic estimate of the mass still unseen.
// Undefined on an empty tally.
double gt_missing_mass(const Tally& tally, const EstimatorConfig& config = {});

// Estimate of the one-step missing-mass decrease, -2 * doubletons / t^2.
// Tracks the exact derivative with far less variance than differencing
// successive missing-mass estimates. Undefined on an empty tally.
double gt_derivative(const Tally& tally);

// Finite difference of two missing-mass estimates at successive t; the
// baseline the doubleton estimator is compared against. May come out
// positive even though the true derivative never is.
double naive_derivative(double prev_mm, double next_mm);

// Smoothed per-label probability for a label present in the tally:
//   (r + 1) / t * N_{r+1} / N_r
// falling back per config when N_{r+1} or N_r vanishes.
double gt_seen_probability(const Tally& tally, LabelId y,
                           const EstimatorConfig& config = {});

// Full assignment: ee_mass from gt_missing_mass, seen weights from
// gt_seen_probability, normalized per config. If every raw seen weight is
// zero, empirical frequencies are substituted before normalizing.
LabelProbabilities label_probabilities(const Tally& tally,
                                       const EstimatorConfig& config = {});

} // namespace cpq
