#include "cpq/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <thread>

#include "cpq/error.hpp"

namespace cpq {

namespace {

constexpr std::uint64_t kSaltSplit = fnv1a64("split");
constexpr std::uint64_t kSaltOracle = fnv1a64("oracle");
constexpr std::uint64_t kSaltTune = fnv1a64("tune");
constexpr std::uint64_t kSaltTask = fnv1a64("task");
constexpr std::uint64_t kSaltTrial = fnv1a64("trial");

// Index-addressed parallel loop. Results must be written to per-index
// slots; the first failure (by index, not by time) wins so reruns fail the
// same way regardless of scheduling.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs)
                                : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr error;
    std::size_t error_index = count;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct QueriedPoint {
    LabelProbabilities probs;
    LabelId truth = 0;
    std::int64_t queries = 0;
};

QueriedPoint query_point(const ExperimentData& data, QueryOracle& oracle, std::size_t index,
                         const PolicyConfig& policy, const EstimatorConfig& estimator) {
    QueriedPoint pt;
    pt.truth = data.truth(index);
    const Tally tally = run_query_loop(oracle, data.id(index), policy);
    pt.queries = tally.total();
    pt.probs = label_probabilities(tally, estimator);
    return pt;
}

struct SplitStats {
    double coverage = 0.0;
    double ee_frac = 0.0;
    double set_size = 0.0;
    double queries = 0.0;
};

// One random split: tune the policy on the first calibration half,
// calibrate thresholds on the second, evaluate on the held-out test half.
std::vector<SplitStats> run_one_split(const ExperimentData& data,
                                      const ExperimentConfig& config, std::size_t split) {
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    RngState rng = make_rng(derive_seed(config.seed, kSaltSplit, split));
    shuffle(order, rng);

    const std::size_t cal_n = n / 2;
    const std::vector<std::size_t> cal(order.begin(), order.begin() + cal_n);
    const std::vector<std::size_t> test(order.begin() + cal_n, order.end());

    std::vector<std::size_t> cal_tune = cal, cal_fit = cal;
    if (config.split_calibration && cal_n >= 2) {
        const std::size_t half = cal_n / 2;
        cal_tune.assign(cal.begin(), cal.begin() + half);
        cal_fit.assign(cal.begin() + half, cal.end());
    }

    PolicyConfig policy = config.policy;
    if (config.variant == Variant::vanilla) {
        policy.mode = QueryMode::fixed;
        policy.fixed_t = std::min(static_cast<std::int64_t>(std::floor(config.budget)),
                                  policy.t_max);
        // The threshold rule has no policy to tune, so the fit stage may use
        // the whole calibration half.
        cal_fit = cal;
    } else {
        policy.mode = QueryMode::adaptive;
        std::vector<std::string> tune_ids;
        tune_ids.reserve(cal_tune.size());
        for (const std::size_t i : cal_tune) tune_ids.push_back(data.id(i));
        const std::uint64_t tune_base = derive_seed(config.seed, kSaltTune, split);
        const OracleFactory factory = [&](std::uint64_t salt) {
            return data.make_oracle(derive_seed(tune_base, salt));
        };
        policy.beta_star = tune_beta(factory, tune_ids, config.budget, config.beta_grid,
                                     policy)
                               .beta_star;
    }

    const auto oracle = data.make_oracle(derive_seed(config.seed, kSaltOracle, split));
    std::vector<QueriedPoint> fit_points, test_points;
    fit_points.reserve(cal_fit.size());
    test_points.reserve(test.size());
    for (const std::size_t i : cal_fit)
        fit_points.push_back(query_point(data, *oracle, i, policy, config.estimator));
    for (const std::size_t i : test)
        test_points.push_back(query_point(data, *oracle, i, policy, config.estimator));

    std::vector<SplitStats> per_alpha;
    per_alpha.reserve(config.alphas.size());
    for (const double alpha : config.alphas) {
        double threshold = 0.0;
        if (config.variant == Variant::p1p2) {
            std::vector<double> scores;
            scores.reserve(fit_points.size());
            for (const auto& pt : fit_points)
                scores.push_back(conformity_score(pt.probs, pt.truth));
            threshold = calibrate_quantile(scores, alpha);
        } else {
            std::vector<CalibrationPoint> pts;
            pts.reserve(fit_points.size());
            for (const auto& pt : fit_points) pts.push_back({pt.probs, pt.truth});
            threshold = vanilla_calibrate(pts, alpha, config.tau_grid);
        }

        SplitStats stats;
        for (const auto& pt : test_points) {
            const PredictionSet set = config.variant == Variant::p1p2
                                          ? build_prediction_set(pt.probs, threshold)
                                          : vanilla_build_set(pt.probs, threshold);
            stats.coverage += (set.includes_ee || set.contains(pt.truth)) ? 1.0 : 0.0;
            stats.ee_frac += set.includes_ee ? 1.0 : 0.0;
            stats.set_size += static_cast<double>(set.seen_size());
            stats.queries += static_cast<double>(pt.queries);
        }
        const double m = static_cast<double>(test_points.size());
        stats.coverage /= m;
        stats.ee_frac /= m;
        stats.set_size /= m;
        stats.queries /= m;
        per_alpha.push_back(stats);
    }
    return per_alpha;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    const double n = static_cast<double>(xs.size());
    if (xs.empty()) return out;
    for (const double x : xs) out.mean += x;
    out.mean /= n;
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / (n - 1.0));
    return out;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

} // namespace

std::string variant_name(Variant v) {
    switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::p1: return "p1";
    case Variant::p1p2: return "p1p2";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "vanilla") return Variant::vanilla;
    if (name == "p1") return Variant::p1;
    if (name == "p1p2") return Variant::p1p2;
    throw Error(ErrorKind::invalid_parameter, "unknown variant '" + name + "'");
}

ReplayData::ReplayData(std::vector<QueryRecord> records) : records_(std::move(records)) {
    if (records_.empty())
        throw Error(ErrorKind::invalid_input, "experiment needs at least one record");
}

LabelId ReplayData::truth(std::size_t i) const {
    if (!records_[i].truth)
        throw Error(ErrorKind::invalid_input,
                    "record '" + records_[i].id + "' lacks a truth label");
    return *records_[i].truth;
}

std::unique_ptr<QueryOracle> ReplayData::make_oracle(std::uint64_t) const {
    return std::make_unique<ReplayOracle>(records_);
}

SyntheticData::SyntheticData(std::vector<DiscreteDistribution> dists,
                             std::vector<LabelId> truths)
    : dists_(std::move(dists)), truths_(std::move(truths)) {
    if (dists_.empty())
        throw Error(ErrorKind::invalid_input, "experiment needs at least one input");
    if (dists_.size() != truths_.size())
        throw Error(ErrorKind::invalid_input, "distribution/truth count mismatch");
    ids_.reserve(dists_.size());
    char buf[32];
    for (std::size_t i = 0; i < dists_.size(); ++i) {
        std::snprintf(buf, sizeof buf, "syn-%06zu", i);
        ids_.emplace_back(buf);
    }
}

std::unique_ptr<QueryOracle> SyntheticData::make_oracle(std::uint64_t salt) const {
    auto oracle = std::make_unique<SyntheticOracle>(salt);
    for (std::size_t i = 0; i < dists_.size(); ++i) oracle->add_input(ids_[i], dists_[i]);
    return oracle;
}

SyntheticData make_synthetic_task(std::size_t n, std::uint64_t seed) {
    std::vector<DiscreteDistribution> dists;
    std::vector<LabelId> truths;
    dists.reserve(n);
    truths.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngState rng = make_rng(derive_seed(seed, kSaltTask, i));
        std::vector<double> w;
        if (uniform_unit(rng) < 0.5) {
            // Peaked: one dominant answer plus a short uniform-ish tail.
            const std::size_t m = 2 + uniform_below(rng, 19);
            const double head = 0.55 + 0.40 * uniform_unit(rng);
            w.assign(m, 0.0);
            w[0] = head;
            double tail = 0.0;
            for (std::size_t j = 1; j < m; ++j) {
                w[j] = 0.05 + uniform_unit(rng);
                tail += w[j];
            }
            for (std::size_t j = 1; j < m; ++j) w[j] *= (1.0 - head) / tail;
        } else {
            // Diffuse: mass spread over a few dozen answers.
            const std::size_t m = 10 + uniform_below(rng, 51);
            w.assign(m, 0.0);
            double total = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double u = uniform_unit(rng);
                w[j] = u * u + 1e-3;
                total += w[j];
            }
            for (std::size_t j = 0; j < m; ++j) w[j] /= total;
        }
        // Normalization leaves a last-ulp residue; absorb it.
        double sum = 0.0;
        for (const double x : w) sum += x;
        w[0] += 1.0 - sum;
        DiscreteDistribution dist(std::move(w));
        truths.push_back(sample(dist, rng));
        dists.push_back(std::move(dist));
    }
    return SyntheticData(std::move(dists), std::move(truths));
}

std::vector<MetricsRow> run_split_experiment(const ExperimentData& data,
                                             const ExperimentConfig& config) {
    if (config.splits < 1)
        throw Error(ErrorKind::invalid_parameter, "splits must be positive");
    if (config.alphas.empty())
        throw Error(ErrorKind::invalid_parameter, "need at least one alpha");
    if (data.size() < 2)
        throw Error(ErrorKind::invalid_input, "need at least two points to split");

    const std::size_t splits = static_cast<std::size_t>(config.splits);
    std::vector<std::vector<SplitStats>> by_split(splits);
    parallel_for(splits, config.jobs,
                 [&](std::size_t s) { by_split[s] = run_one_split(data, config, s); });

    std::vector<MetricsRow> rows;
    rows.reserve(config.alphas.size());
    std::vector<std::size_t> alpha_order(config.alphas.size());
    std::iota(alpha_order.begin(), alpha_order.end(), 0);
    std::sort(alpha_order.begin(), alpha_order.end(), [&](std::size_t a, std::size_t b) {
        return config.alphas[a] < config.alphas[b];
    });

    for (const std::size_t a : alpha_order) {
        std::vector<double> cov, ee, size, queries;
        cov.reserve(splits);
        ee.reserve(splits);
        size.reserve(splits);
        queries.reserve(splits);
        for (std::size_t s = 0; s < splits; ++s) {
            cov.push_back(by_split[s][a].coverage);
            ee.push_back(by_split[s][a].ee_frac);
            size.push_back(by_split[s][a].set_size);
            queries.push_back(by_split[s][a].queries);
        }
        MetricsRow row;
        row.variant = variant_name(config.variant);
        row.alpha = config.alphas[a];
        row.budget = config.budget;
        const MeanStd c = mean_std(cov), e = mean_std(ee), z = mean_std(size),
                      q = mean_std(queries);
        row.coverage_mean = c.mean;
        row.coverage_std = c.std;
        row.ee_frac_mean = e.mean;
        row.ee_frac_std = e.std;
        row.setsize_mean = z.mean;
        row.setsize_std = z.std;
        row.queries_mean = q.mean;
        row.queries_std = q.std;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<MetricsRow> run_budget_sweep(const ExperimentData& data,
                                         const ExperimentConfig& config,
                                         std::span<const double> budgets) {
    if (budgets.empty())
        throw Error(ErrorKind::invalid_parameter, "need at least one budget");
    std::vector<MetricsRow> rows;
    for (const double b : budgets) {
        ExperimentConfig c = config;
        c.budget = b;
        auto part = run_split_experiment(data, c);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        if (a.variant != b.variant) return a.variant < b.variant;
        if (a.alpha != b.alpha) return a.alpha < b.alpha;
        return a.budget < b.budget;
    });
    return rows;
}

std::vector<CurveRow> run_estimator_eval(const DiscreteDistribution& d, std::int64_t t_max,
                                         int trials, std::uint64_t seed) {
    if (t_max < 1)
        throw Error(ErrorKind::invalid_parameter, "t_max must be positive");
    if (trials < 1)
        throw Error(ErrorKind::invalid_parameter, "trials must be positive");

    const std::size_t steps = static_cast<std::size_t>(t_max);
    std::vector<std::vector<double>> mm(steps), deriv(steps), naive(steps);
    for (auto& v : mm) v.reserve(static_cast<std::size_t>(trials));
    for (auto& v : deriv) v.reserve(static_cast<std::size_t>(trials));
    for (auto& v : naive) v.reserve(static_cast<std::size_t>(trials));

    for (int trial = 0; trial < trials; ++trial) {
        RngState rng = make_rng(derive_seed(seed, kSaltTrial, static_cast<std::uint64_t>(trial)));
        Tally tally;
        std::vector<double> mm_at(steps + 2, 0.0);
        for (std::int64_t t = 1; t <= t_max + 1; ++t) {
            tally.push(sample(d, rng));
            mm_at[static_cast<std::size_t>(t)] = gt_missing_mass(tally);
            if (t <= t_max) {
                mm[static_cast<std::size_t>(t - 1)].push_back(mm_at[static_cast<std::size_t>(t)]);
                deriv[static_cast<std::size_t>(t - 1)].push_back(gt_derivative(tally));
            }
        }
        for (std::int64_t t = 1; t <= t_max; ++t)
            naive[static_cast<std::size_t>(t - 1)].push_back(
                naive_derivative(mm_at[static_cast<std::size_t>(t)],
                                 mm_at[static_cast<std::size_t>(t + 1)]));
    }

    std::vector<CurveRow> rows;
    rows.reserve(steps);
    for (std::int64_t t = 1; t <= t_max; ++t) {
        const std::size_t i = static_cast<std::size_t>(t - 1);
        CurveRow row;
        row.t = t;
        row.exact_mm = exact_missing_mass(d, t);
        row.exact_deriv = exact_derivative(d, t);
        const MeanStd g = mean_std(mm[i]), dd = mean_std(deriv[i]), nv = mean_std(naive[i]);
        row.gt_mm_mean = g.mean;
        row.gt_mm_std = g.std;
        row.doubleton_mean = dd.mean;
        row.doubleton_std = dd.std;
        row.naive_mean = nv.mean;
        row.naive_std = nv.std;
        rows.push_back(row);
    }
    return rows;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
    std::string out = "variant,alpha,budget,coverage_mean,coverage_std,ee_frac_mean,"
                      "ee_frac_std,setsize_mean,setsize_std,queries_mean,queries_std\n";
    for (const auto& r : rows) {
        out += r.variant;
        for (const double x : {r.alpha, r.budget, r.coverage_mean, r.coverage_std,
                               r.ee_frac_mean, r.ee_frac_std, r.setsize_mean, r.setsize_std,
                               r.queries_mean, r.queries_std}) {
            out += ',';
            out += format_double(x);
        }
        out += '\n';
    }
    return out;
}

std::string curve_csv(std::span<const CurveRow> rows) {
    std::string out = "t,exact_mm,gt_mm_mean,gt_mm_std,exact_deriv,doubleton_mean,"
                      "doubleton_std,naive_mean,naive_std\n";
    for (const auto& r : rows) {
        out += std::to_string(r.t);
        for (const double x : {r.exact_mm, r.gt_mm_mean, r.gt_mm_std, r.exact_deriv,
                               r.doubleton_mean, r.doubleton_std, r.naive_mean, r.naive_std}) {
            out += ',';
            out += format_double(x);
        }
        out += '\n';
    }
    return out;
}

} // namespace cpq
