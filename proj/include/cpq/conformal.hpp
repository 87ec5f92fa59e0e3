#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cpq/estimators.hpp"
#include "cpq/policy.hpp"

namespace cpq {

// One candidate answer with its conformity score: either a seen label
// (score in [0, 1]) or the everything-else fallback (nullopt label, score
// in [1, 2]). The offset keeps every fallback score above every seen one.
struct ScoredCandidate {
    std::optional<LabelId> label;
    double score;
};

struct PredictionSet {
    std::vector<LabelId> labels; // ascending; only labels the tally saw
    bool includes_ee = false;
    double q_threshold = 0.0;

    bool contains(LabelId y) const;
    std::size_t seen_size() const noexcept { return labels.size(); }
};

// Score of a concrete label: 1 - P(label) when the tally saw it, otherwise
// the everything-else score.
double conformity_score(const LabelProbabilities& probs, LabelId y);

// Score of the everything-else candidate: 2 - ee_mass.
double ee_conformity_score(const LabelProbabilities& probs);

// All seen labels plus the fallback candidate, scored.
std::vector<ScoredCandidate> score_candidates(const LabelProbabilities& probs);

// Conformal quantile with the +inf augmentation: the k-th smallest of
// scores joined with +inf, k = ceil((n+1)(1-alpha)). Returns +inf when the
// augmented rank lands on the sentinel, which every set-builder then treats
// as include-everything.
double calibrate_quantile(std::span<const double> scores, double alpha);

// Everything scoring at most q_star.
PredictionSet build_prediction_set(const LabelProbabilities& probs, double q_star);

struct CalibrationPoint {
    LabelProbabilities probs;
    LabelId truth;
};

// Probability-threshold baseline. Includes the fallback iff ee_mass >= tau,
// then adds seen labels in decreasing-probability order (ties by ascending
// label id) until their cumulative mass exceeds 1 - tau.
PredictionSet vanilla_build_set(const LabelProbabilities& probs, double tau);

// Smallest grid threshold whose empirical coverage over the calibration
// points reaches 1 - alpha. Throws Error(infeasible_calibration) when no
// grid value qualifies.
double vanilla_calibrate(std::span<const CalibrationPoint> points, double alpha,
                         std::span<const double> tau_grid);

std::vector<double> default_tau_grid();

// Everything needed to reproduce predictions later: the fitted thresholds
// plus the estimator and policy settings they were fitted under.
struct CalibrationModel {
    double alpha = 0.1;
    double beta_star = 0.0;
    double q_star = 0.0; // may be +inf
    EstimatorConfig estimator;
    PolicyConfig policy;
    std::uint64_t seed = 0;
};

nlohmann::ordered_json model_to_json(const CalibrationModel& model);

// Rejects unknown format tags and versions with Error(model_mismatch).
CalibrationModel model_from_json(const nlohmann::json& j);

nlohmann::ordered_json estimator_config_to_json(const EstimatorConfig& config);
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json policy_config_to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

} // namespace cpq
