#pragma once

#include <functional>
#include <memory>
#include <span>

#include "cpq/estimators.hpp"
#include "cpq/oracle.hpp"

namespace cpq {

enum class QueryMode {
    adaptive, // stop once the estimated derivative clears beta_star
    fixed,    // draw exactly fixed_t samples
};

struct PolicyConfig {
    QueryMode mode = QueryMode::adaptive;
    // Stopping threshold on the (non-positive) derivative estimate. More
    // negative means more queries tolerated before stopping.
    double beta_star = 0.0;
    std::int64_t t_min = 3;
    std::int64_t t_max = 200;
    std::int64_t fixed_t = 0; // only read in fixed mode
};

// Queries the oracle for one input. Adaptive mode stops at the smallest
// t >= t_min with gt_derivative(tally) >= beta_star, i.e. once one more
// query is no longer estimated to buy at least |beta_star| of coverage
// mass; t_max and source exhaustion force a stop regardless.
Tally run_query_loop(QueryOracle& oracle, const std::string& input_id,
                     const PolicyConfig& config);

// Builds an oracle for one tuning pass. The salt distinguishes passes so
// stochastic oracles redraw independently per grid candidate; replay
// sources just hand back fresh cursors.
using OracleFactory = std::function<std::unique_ptr<QueryOracle>(std::uint64_t salt)>;

struct BetaTuneResult {
    double beta_star;
    double avg_queries; // induced average over the tuning inputs
};

// Log-spaced thresholds covering [-1, -1e-6], plus 0; 40 values.
std::vector<double> default_beta_grid();

// Simulates the adaptive loop for every grid candidate and returns the one
// whose induced average query count is the largest still within budget. If
// no candidate fits, returns the one inducing the fewest queries.
BetaTuneResult tune_beta(const OracleFactory& make_oracle,
                         std::span<const std::string> input_ids, double budget,
                         std::span<const double> grid, const PolicyConfig& defaults);

struct GreedyAllocation {
    std::vector<std::int64_t> counts;
    // Derivative value of the final query taken; acts as the threshold
    // beta* in the optimality characterization. -inf when budget is 0.
    double last_marginal_gain;
};

// Distributes an integer query budget over known distributions, always
// funding the input whose next query removes the most missing mass. Exact
// derivatives make this optimal (gains are diminishing), which the
// exhaustive-search cross-check relies on.
GreedyAllocation greedy_allocate(std::span<const DiscreteDistribution> dists,
                                 std::int64_t budget);

} // namespace cpq
