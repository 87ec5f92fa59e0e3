#include "cpq/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpq/error.hpp"

namespace cpq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_alpha(double alpha) {
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw Error(ErrorKind::invalid_parameter,
                    "alpha must lie in (0, 1), got " + std::to_string(alpha));
}

} // namespace

bool PredictionSet::contains(LabelId y) const {
    return std::binary_search(labels.begin(), labels.end(), y);
}

double conformity_score(const LabelProbabilities& probs, LabelId y) {
    const auto it = probs.seen.find(y);
    if (it == probs.seen.end()) return ee_conformity_score(probs);
    return 1.0 - it->second;
}

double ee_conformity_score(const LabelProbabilities& probs) {
    return 2.0 - probs.ee_mass;
}

std::vector<ScoredCandidate> score_candidates(const LabelProbabilities& probs) {
    std::vector<ScoredCandidate> out;
    out.reserve(probs.seen.size() + 1);
    for (const auto& [label, p] : probs.seen)
        out.push_back({label, 1.0 - p});
    out.push_back({std::nullopt, ee_conformity_score(probs)});
    return out;
}

double calibrate_quantile(std::span<const double> scores, double alpha) {
    validate_alpha(alpha);
    const std::size_t n = scores.size();
    const double rank = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha));
    std::size_t k = rank < 1.0 ? 1 : static_cast<std::size_t>(rank);
    if (k > n + 1) k = n + 1;
    if (k == n + 1) return kInf; // the augmented sentinel
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    return sorted[k - 1];
}

PredictionSet build_prediction_set(const LabelProbabilities& probs, double q_star) {
    PredictionSet set;
    set.q_threshold = q_star;
    for (const auto& [label, p] : probs.seen)
        if (1.0 - p <= q_star) set.labels.push_back(label);
    set.includes_ee = ee_conformity_score(probs) <= q_star;
    return set;
}

PredictionSet vanilla_build_set(const LabelProbabilities& probs, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0))
        throw Error(ErrorKind::invalid_parameter,
                    "tau must lie in [0, 1], got " + std::to_string(tau));
    PredictionSet set;
    set.q_threshold = tau;
    set.includes_ee = probs.ee_mass >= tau;

    std::vector<std::pair<LabelId, double>> order(probs.seen.begin(), probs.seen.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const double target = 1.0 - tau;
    double cum = 0.0;
    for (const auto& [label, p] : order) {
        set.labels.push_back(label);
        cum += p;
        if (cum > target) break;
    }
    std::sort(set.labels.begin(), set.labels.end());
    return set;
}

double vanilla_calibrate(std::span<const CalibrationPoint> points, double alpha,
                         std::span<const double> tau_grid) {
    validate_alpha(alpha);
    if (points.empty())
        throw Error(ErrorKind::invalid_input, "calibration needs at least one point");
    if (tau_grid.empty())
        throw Error(ErrorKind::invalid_input, "calibration needs a non-empty tau grid");

    bool found = false;
    double best_tau = 0.0;
    for (const double tau : tau_grid) {
        if (found && tau >= best_tau) continue;
        std::size_t covered = 0;
        for (const auto& pt : points) {
            const PredictionSet set = vanilla_build_set(pt.probs, tau);
            if (set.includes_ee || set.contains(pt.truth)) ++covered;
        }
        const double cov = static_cast<double>(covered) / static_cast<double>(points.size());
        if (cov >= 1.0 - alpha) {
            found = true;
            best_tau = tau;
        }
    }
    if (!found)
        throw Error(ErrorKind::infeasible_calibration,
                    "no tau in the grid reaches coverage " + std::to_string(1.0 - alpha));
    return best_tau;
}

std::vector<double> default_tau_grid() {
    // 0.01 .. 1.00. Zero is excluded deliberately: at tau = 0 the fallback
    // is always included, so that threshold is always "feasible" and the
    // min-threshold rule would never pick anything else.
    std::vector<double> grid(100);
    for (int i = 0; i < 100; ++i) grid[i] = static_cast<double>(i + 1) / 100.0;
    return grid;
}

nlohmann::ordered_json estimator_config_to_json(const EstimatorConfig& config) {
    nlohmann::ordered_json j;
    j["gt_fallback"] = config.gt_fallback == GtFallback::skip ? "skip" : "empirical-frequency";
    j["clip_to_unit"] = config.clip_to_unit;
    j["normalization"] = config.normalization == SeenNormalization::none
                             ? "none"
                             : "scale-seen-to-complement";
    return j;
}

EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
    EstimatorConfig config;
    const std::string fb = j.at("gt_fallback").get<std::string>();
    if (fb == "skip")
        config.gt_fallback = GtFallback::skip;
    else if (fb == "empirical-frequency")
        config.gt_fallback = GtFallback::empirical_frequency;
    else
        throw Error(ErrorKind::parse_error, "unknown gt_fallback '" + fb + "'");
    config.clip_to_unit = j.at("clip_to_unit").get<bool>();
    const std::string norm = j.at("normalization").get<std::string>();
    if (norm == "none")
        config.normalization = SeenNormalization::none;
    else if (norm == "scale-seen-to-complement")
        config.normalization = SeenNormalization::scale_seen_to_complement;
    else
        throw Error(ErrorKind::parse_error, "unknown normalization '" + norm + "'");
    return config;
}

nlohmann::ordered_json policy_config_to_json(const PolicyConfig& config) {
    nlohmann::ordered_json j;
    j["mode"] = config.mode == QueryMode::fixed ? "fixed" : "adaptive";
    j["beta_star"] = config.beta_star;
    j["t_min"] = config.t_min;
    j["t_max"] = config.t_max;
    j["fixed_t"] = config.fixed_t;
    return j;
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
    PolicyConfig config;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "fixed")
        config.mode = QueryMode::fixed;
    else if (mode == "adaptive")
        config.mode = QueryMode::adaptive;
    else
        throw Error(ErrorKind::parse_error, "unknown policy mode '" + mode + "'");
    config.beta_star = j.at("beta_star").get<double>();
    config.t_min = j.at("t_min").get<std::int64_t>();
    config.t_max = j.at("t_max").get<std::int64_t>();
    config.fixed_t = j.at("fixed_t").get<std::int64_t>();
    return config;
}

nlohmann::ordered_json model_to_json(const CalibrationModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "cpq-model";
    j["version"] = 1;
    j["alpha"] = model.alpha;
    j["beta_star"] = model.beta_star;
    if (std::isinf(model.q_star))
        j["q_star"] = "inf";
    else
        j["q_star"] = model.q_star;
    j["estimator"] = estimator_config_to_json(model.estimator);
    j["policy"] = policy_config_to_json(model.policy);
    j["seed"] = model.seed;
    return j;
}

CalibrationModel model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", std::string()) != "cpq-model")
        throw Error(ErrorKind::model_mismatch, "not a cpq-model document");
    if (!j.contains("version") || j["version"] != 1)
        throw Error(ErrorKind::model_mismatch, "unsupported model version");
    CalibrationModel model;
    try {
        model.alpha = j.at("alpha").get<double>();
        model.beta_star = j.at("beta_star").get<double>();
        if (j.at("q_star").is_string()) {
            if (j.at("q_star").get<std::string>() != "inf")
                throw Error(ErrorKind::parse_error, "bad q_star");
            model.q_star = kInf;
        } else {
            model.q_star = j.at("q_star").get<double>();
        }
        model.estimator = estimator_config_from_json(j.at("estimator"));
        model.policy = policy_config_from_json(j.at("policy"));
        model.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, std::string("bad model document: ") + e.what());
    }
    return model;
}

} // namespace cpq
