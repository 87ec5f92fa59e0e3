#include "cpq/policy.hpp"

#include <cmath>
#include <limits>

#include "cpq/error.hpp"

namespace cpq {

namespace {

void validate(const PolicyConfig& config) {
    if (config.beta_star > 0.0)
        throw Error(ErrorKind::invalid_parameter, "beta_star must be <= 0");
    if (config.t_min < 1)
        throw Error(ErrorKind::invalid_parameter, "t_min must be positive");
    if (config.t_max < config.t_min)
        throw Error(ErrorKind::invalid_parameter, "t_max must be >= t_min");
    if (config.mode == QueryMode::fixed && config.fixed_t < 0)
        throw Error(ErrorKind::invalid_parameter, "fixed_t must be non-negative");
}

} // namespace

Tally run_query_loop(QueryOracle& oracle, const std::string& input_id,
                     const PolicyConfig& config) {
    validate(config);
    Tally tally;
    if (config.mode == QueryMode::fixed) {
        for (std::int64_t i = 0; i < config.fixed_t; ++i) {
            const auto y = oracle.next_sample(input_id);
            if (!y) break;
            tally.push(*y);
        }
        return tally;
    }
    while (tally.total() < config.t_max) {
        if (tally.total() >= config.t_min && gt_derivative(tally) >= config.beta_star)
            break;
        const auto y = oracle.next_sample(input_id);
        if (!y) break; // source exhausted: forced stop
        tally.push(*y);
    }
    return tally;
}

std::vector<double> default_beta_grid() {
    // 39 log-spaced magnitudes from 1 down to 1e-6, then the zero threshold.
    constexpr int n = 39;
    std::vector<double> grid(n + 1);
    for (int i = 0; i < n; ++i)
        grid[i] = -std::pow(10.0, -6.0 * static_cast<double>(i) / (n - 1));
    grid[n] = 0.0;
    return grid;
}

BetaTuneResult tune_beta(const OracleFactory& make_oracle,
                         std::span<const std::string> input_ids, double budget,
                         std::span<const double> grid, const PolicyConfig& defaults) {
    if (input_ids.empty())
        throw Error(ErrorKind::invalid_input, "beta tuning needs at least one input");
    if (grid.empty())
        throw Error(ErrorKind::invalid_input, "beta tuning needs a non-empty grid");

    const double n = static_cast<double>(input_ids.size());
    const double total_cap = budget * n;

    bool have_feasible = false;
    double best_beta = 0.0, best_avg = 0.0;
    bool have_fallback = false;
    double fallback_beta = 0.0, fallback_avg = 0.0;

    for (std::size_t k = 0; k < grid.size(); ++k) {
        PolicyConfig cand = defaults;
        cand.mode = QueryMode::adaptive;
        cand.beta_star = grid[k];
        validate(cand);

        const auto oracle = make_oracle(k);
        double total = 0.0;
        std::size_t done = 0;
        bool over = false;
        for (; done < input_ids.size(); ++done) {
            total += static_cast<double>(run_query_loop(*oracle, input_ids[done], cand).total());
            if (total > total_cap) {
                over = true; // cannot fit the budget anymore
                break;
            }
        }
        if (!over) {
            const double avg = total / n;
            if (!have_feasible || avg > best_avg ||
                (avg == best_avg && cand.beta_star > best_beta)) {
                have_feasible = true;
                best_beta = cand.beta_star;
                best_avg = avg;
            }
        } else if (!have_feasible) {
            // Track the cheapest candidate in case nothing fits; finish the
            // aborted pass to learn its true average.
            for (std::size_t i = done + 1; i < input_ids.size(); ++i)
                total += static_cast<double>(run_query_loop(*oracle, input_ids[i], cand).total());
            const double avg = total / n;
            if (!have_fallback || avg < fallback_avg ||
                (avg == fallback_avg && cand.beta_star < fallback_beta)) {
                have_fallback = true;
                fallback_beta = cand.beta_star;
                fallback_avg = avg;
            }
        }
    }

    if (have_feasible) return {best_beta, best_avg};
    return {fallback_beta, fallback_avg};
}

GreedyAllocation greedy_allocate(std::span<const DiscreteDistribution> dists,
                                 std::int64_t budget) {
    if (dists.empty())
        throw Error(ErrorKind::invalid_input, "allocation needs at least one distribution");
    if (budget < 0)
        throw Error(ErrorKind::invalid_parameter, "budget must be non-negative");

    GreedyAllocation out;
    out.counts.assign(dists.size(), 0);
    out.last_marginal_gain = -std::numeric_limits<double>::infinity();
    for (std::int64_t step = 0; step < budget; ++step) {
        std::size_t best = 0;
        double best_gain = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dists.size(); ++i) {
            const double gain = exact_derivative(dists[i], out.counts[i]);
            if (gain < best_gain) { // ties keep the lowest index
                best_gain = gain;
                best = i;
            }
        }
        ++out.counts[best];
        out.last_marginal_gain = best_gain;
    }
    return out;
}

} // namespace cpq
