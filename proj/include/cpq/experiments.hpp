#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cpq/conformal.hpp"
#include "cpq/oracle.hpp"

namespace cpq {

enum class Variant {
    vanilla, // fixed per-input query count, probability-threshold sets
    p1,      // adaptive querying, probability-threshold sets
    p1p2,    // adaptive querying, conformal sets
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ExperimentConfig {
    Variant variant = Variant::p1p2;
    std::vector<double> alphas = {0.1};
    double budget = 20.0; // average queries per input allowed
    int splits = 50;
    std::uint64_t seed = 0;
    // Tune/calibrate on disjoint halves of the calibration split. Off means
    // both stages see the whole calibration set.
    bool split_calibration = true;
    int jobs = 0; // worker threads; 0 picks the hardware count
    EstimatorConfig estimator;
    PolicyConfig policy; // beta_star/fixed_t are filled in per variant
    std::vector<double> beta_grid = default_beta_grid();
    std::vector<double> tau_grid = default_tau_grid();
};

struct MetricsRow {
    std::string variant;
    double alpha = 0.0;
    double budget = 0.0;
    double coverage_mean = 0.0, coverage_std = 0.0;
    double ee_frac_mean = 0.0, ee_frac_std = 0.0;
    double setsize_mean = 0.0, setsize_std = 0.0;
    double queries_mean = 0.0, queries_std = 0.0;
};

// A labeled pool of inputs the harness can draw fresh query streams from.
class ExperimentData {
public:
    virtual ~ExperimentData() = default;
    virtual std::size_t size() const = 0;
    virtual const std::string& id(std::size_t i) const = 0;
    virtual LabelId truth(std::size_t i) const = 0;
    // Fresh oracle over every input. Stochastic sources draw independent
    // streams per salt; replay sources return rewound cursors.
    virtual std::unique_ptr<QueryOracle> make_oracle(std::uint64_t salt) const = 0;
};

class ReplayData final : public ExperimentData {
public:
    explicit ReplayData(std::vector<QueryRecord> records);

    std::size_t size() const override { return records_.size(); }
    const std::string& id(std::size_t i) const override { return records_[i].id; }
    LabelId truth(std::size_t i) const override;
    std::unique_ptr<QueryOracle> make_oracle(std::uint64_t salt) const override;

    const std::vector<QueryRecord>& records() const noexcept { return records_; }

private:
    std::vector<QueryRecord> records_;
};

class SyntheticData final : public ExperimentData {
public:
    SyntheticData(std::vector<DiscreteDistribution> dists, std::vector<LabelId> truths);

    std::size_t size() const override { return dists_.size(); }
    const std::string& id(std::size_t i) const override { return ids_[i]; }
    LabelId truth(std::size_t i) const override { return truths_[i]; }
    std::unique_ptr<QueryOracle> make_oracle(std::uint64_t salt) const override;

    const DiscreteDistribution& distribution(std::size_t i) const { return dists_[i]; }

private:
    std::vector<DiscreteDistribution> dists_;
    std::vector<LabelId> truths_;
    std::vector<std::string> ids_;
};

// Benchmark generator: a mix of peaked inputs (one answer dominates, short
// tail) and diffuse inputs (mass spread over dozens of answers). The truth
// of each input is drawn from its own distribution, so the oracle and the
// labels agree. Everything is a pure function of (n, seed).
SyntheticData make_synthetic_task(std::size_t n, std::uint64_t seed);

// Runs `splits` random 50:50 calibration/test splits of the data and
// aggregates per-alpha metrics (means and 1-sigma standard deviations over
// splits). One row per alpha.
std::vector<MetricsRow> run_split_experiment(const ExperimentData& data,
                                             const ExperimentConfig& config);

// run_split_experiment for each budget; rows sorted by variant, alpha,
// budget.
std::vector<MetricsRow> run_budget_sweep(const ExperimentData& data,
                                         const ExperimentConfig& config,
                                         std::span<const double> budgets);

struct CurveRow {
    std::int64_t t = 0;
    double exact_mm = 0.0;
    double gt_mm_mean = 0.0, gt_mm_std = 0.0;
    double exact_deriv = 0.0;
    double doubleton_mean = 0.0, doubleton_std = 0.0;
    double naive_mean = 0.0, naive_std = 0.0;
};

// Estimator-vs-truth curves: repeatedly grows a sample of the distribution
// and records, for every prefix length t, the missing-mass estimate, the
// doubleton derivative estimate, and the naive finite difference of
// successive missing-mass estimates, against their exact values.
std::vector<CurveRow> run_estimator_eval(const DiscreteDistribution& d, std::int64_t t_max,
                                         int trials, std::uint64_t seed);

std::string metrics_csv(std::span<const MetricsRow> rows);
std::string curve_csv(std::span<const CurveRow> rows);

} // namespace cpq
