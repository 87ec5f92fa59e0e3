// cpq: query-budgeted prediction sets over black-box samplers.
//
// Subcommands:
//   estimate   estimator-vs-truth curves for a known distribution (CSV)
//   run        split experiments over replay or synthetic data (CSV)
//   tune-beta  pick the stopping threshold for a query budget (JSON)
//   calibrate  fit a prediction-set model on replay data (JSON)
//   predict    emit prediction sets for replay data under a model (JSONL)
//
// Exit codes: 0 ok, 2 bad arguments or malformed input, 3 file I/O failure
// (unreadable input, unwritable output), 4 infeasible threshold
// calibration, 5 model format mismatch.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpq/conformal.hpp"
#include "cpq/error.hpp"
#include "cpq/experiments.hpp"
#include "cpq/io.hpp"

namespace {

struct CommonOpts {
    std::uint64_t seed = 0;
    bool seed_given = false;
};

// --seed wins; CPQ_SEED fills in when the flag is absent.
std::uint64_t resolve_seed(const CommonOpts& opts) {
    if (opts.seed_given) return opts.seed;
    if (const char* env = std::getenv("CPQ_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw cpq::Error(cpq::ErrorKind::invalid_parameter,
                             std::string("CPQ_SEED is not an integer: ") + env);
        }
    }
    return 0;
}

cpq::DiscreteDistribution parse_dist_spec(const std::string& spec) {
    const auto bad = [&](const std::string& why) {
        return cpq::Error(cpq::ErrorKind::invalid_parameter,
                          "bad distribution spec '" + spec + "': " + why);
    };
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw bad("expected kind:... form");
    const std::string kind = spec.substr(0, colon);
    try {
        if (kind == "uniform") {
            const std::size_t m = std::stoull(spec.substr(colon + 1));
            return cpq::make_uniform(m);
        }
        if (kind == "geometric") {
            const auto colon2 = spec.find(':', colon + 1);
            if (colon2 == std::string::npos) throw bad("expected geometric:p:m");
            const double p = std::stod(spec.substr(colon + 1, colon2 - colon - 1));
            const std::size_t m = std::stoull(spec.substr(colon2 + 1));
            return cpq::make_geometric(p, m);
        }
    } catch (const cpq::Error&) {
        throw;
    } catch (const std::exception&) {
        throw bad("unparsable number");
    }
    throw bad("unknown kind '" + kind + "'");
}

std::size_t parse_synthetic_spec(const std::string& spec) {
    if (spec.rfind("n=", 0) != 0)
        throw cpq::Error(cpq::ErrorKind::invalid_parameter,
                         "bad synthetic spec '" + spec + "': expected n=<count>");
    try {
        return std::stoull(spec.substr(2));
    } catch (const std::exception&) {
        throw cpq::Error(cpq::ErrorKind::invalid_parameter,
                         "bad synthetic spec '" + spec + "': unparsable count");
    }
}

void write_or_print(const std::optional<std::string>& path, const std::string& content) {
    if (path)
        cpq::atomic_write_file(*path, content);
    else
        std::fputs(content.c_str(), stdout);
}

// Splits replay records into tune/fit halves with the same derived-seed
// shuffle the experiment harness uses.
struct CalSplit {
    std::vector<std::size_t> tune;
    std::vector<std::size_t> fit;
};

CalSplit split_for_calibration(std::size_t n, std::uint64_t seed, bool split_cal) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    cpq::RngState rng = cpq::make_rng(cpq::derive_seed(seed, cpq::fnv1a64("calsplit"), 0));
    cpq::shuffle(order, rng);
    CalSplit out;
    if (split_cal && n >= 2) {
        const std::size_t half = n / 2;
        out.tune.assign(order.begin(), order.begin() + half);
        out.fit.assign(order.begin() + half, order.end());
    } else {
        out.tune = order;
        out.fit = order;
    }
    return out;
}

int cmd_estimate(const std::string& dist_spec, std::int64_t t_max, int trials,
                 const CommonOpts& common, const std::optional<std::string>& out) {
    const auto dist = parse_dist_spec(dist_spec);
    const auto rows = cpq::run_estimator_eval(dist, t_max, trials, resolve_seed(common));
    write_or_print(out, cpq::curve_csv(rows));
    return 0;
}

int cmd_run(const std::optional<std::string>& data_path,
            const std::optional<std::string>& synthetic_spec, const std::string& variant,
            std::vector<double> alphas, std::vector<double> budgets, int splits, int jobs,
            bool no_split_cal, const CommonOpts& common,
            const std::optional<std::string>& out) {
    if (!data_path && !synthetic_spec)
        throw cpq::Error(cpq::ErrorKind::invalid_parameter,
                         "one of --data or --synthetic is required");
    if (data_path && synthetic_spec)
        throw cpq::Error(cpq::ErrorKind::invalid_parameter,
                         "--data and --synthetic are mutually exclusive");

    cpq::ExperimentConfig config;
    config.variant = cpq::variant_from_name(variant);
    config.alphas = std::move(alphas);
    config.splits = splits;
    config.jobs = jobs;
    config.seed = resolve_seed(common);
    config.split_calibration = !no_split_cal;

    std::unique_ptr<cpq::ExperimentData> data;
    if (data_path)
        data = std::make_unique<cpq::ReplayData>(cpq::load_records(*data_path));
    else
        data = std::make_unique<cpq::SyntheticData>(
            cpq::make_synthetic_task(parse_synthetic_spec(*synthetic_spec), config.seed));

    const auto rows = cpq::run_budget_sweep(*data, config, budgets);
    write_or_print(out, cpq::metrics_csv(rows));
    return 0;
}

int cmd_tune_beta(const std::string& data_path, double budget, const CommonOpts& common,
                  const std::optional<std::string>& out) {
    const auto records = cpq::load_records(data_path);
    const cpq::ReplayData data(std::move(records));
    std::vector<std::string> ids;
    ids.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) ids.push_back(data.id(i));

    const std::uint64_t seed = resolve_seed(common);
    const cpq::OracleFactory factory = [&](std::uint64_t salt) {
        return data.make_oracle(cpq::derive_seed(seed, salt));
    };
    cpq::PolicyConfig defaults;
    const auto grid = cpq::default_beta_grid();
    const auto result = cpq::tune_beta(factory, ids, budget, grid, defaults);

    nlohmann::ordered_json j;
    j["beta_star"] = result.beta_star;
    j["avg_queries"] = result.avg_queries;
    write_or_print(out, j.dump() + "\n");
    return 0;
}

int cmd_calibrate(const std::string& data_path, double alpha, double budget, bool no_split_cal,
                  const CommonOpts& common, const std::optional<std::string>& out) {
    const cpq::ReplayData data(cpq::load_records(data_path));
    const std::uint64_t seed = resolve_seed(common);
    const CalSplit split = split_for_calibration(data.size(), seed, !no_split_cal);

    std::vector<std::string> tune_ids;
    tune_ids.reserve(split.tune.size());
    for (const std::size_t i : split.tune) tune_ids.push_back(data.id(i));

    cpq::CalibrationModel model;
    model.alpha = alpha;
    model.seed = seed;
    model.policy.mode = cpq::QueryMode::adaptive;

    const cpq::OracleFactory factory = [&](std::uint64_t salt) {
        return data.make_oracle(cpq::derive_seed(seed, salt));
    };
    model.policy.beta_star =
        cpq::tune_beta(factory, tune_ids, budget, cpq::default_beta_grid(), model.policy)
            .beta_star;
    model.beta_star = model.policy.beta_star;

    const auto oracle = data.make_oracle(cpq::derive_seed(seed, cpq::fnv1a64("fit")));
    std::vector<double> scores;
    scores.reserve(split.fit.size());
    for (const std::size_t i : split.fit) {
        const cpq::Tally tally = cpq::run_query_loop(*oracle, data.id(i), model.policy);
        const auto probs = cpq::label_probabilities(tally, model.estimator);
        scores.push_back(cpq::conformity_score(probs, data.truth(i)));
    }
    model.q_star = cpq::calibrate_quantile(scores, alpha);

    write_or_print(out, cpq::model_to_json(model).dump(2) + "\n");
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::optional<std::string>& out) {
    nlohmann::json mj;
    try {
        mj = nlohmann::json::parse(cpq::read_file(model_path));
    } catch (const nlohmann::json::exception& e) {
        throw cpq::Error(cpq::ErrorKind::parse_error,
                         model_path + ": " + std::string(e.what()));
    }
    const cpq::CalibrationModel model = cpq::model_from_json(mj);
    const auto records = cpq::load_records(data_path);

    // The replay file carries the query stream, so prediction is a pure
    // function of (model, data).
    cpq::ReplayOracle oracle(records);
    std::string lines;
    for (const auto& rec : records) {
        const cpq::Tally tally = cpq::run_query_loop(oracle, rec.id, model.policy);
        const auto probs = cpq::label_probabilities(tally, model.estimator);
        const cpq::PredictionSet set = cpq::build_prediction_set(probs, model.q_star);
        nlohmann::ordered_json j;
        j["id"] = rec.id;
        j["set"] = set.labels;
        j["ee"] = set.includes_ee;
        if (rec.truth)
            j["covered"] = set.includes_ee || set.contains(*rec.truth);
        lines += j.dump();
        lines += '\n';
    }
    write_or_print(out, lines);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"query-budgeted prediction sets over black-box samplers"};
    app.require_subcommand(1);

    CommonOpts common;
    const auto add_seed = [&common](CLI::App* cmd) {
        cmd->add_option("--seed", common.seed, "rng seed (default: $CPQ_SEED or 0)")
            ->each([&common](const std::string&) { common.seed_given = true; });
    };

    std::optional<std::string> out;
    const auto add_out = [&out](CLI::App* cmd) {
        cmd->add_option("--out", out, "output path (default: stdout)");
    };

    // estimate
    auto* estimate = app.add_subcommand("estimate", "estimator-vs-truth curves (CSV)");
    std::string dist_spec;
    std::int64_t t_max = 200;
    int trials = 100;
    estimate->add_option("--dist", dist_spec, "uniform:<m> or geometric:<p>:<m>")->required();
    estimate->add_option("--tmax", t_max, "largest sample size on the curve");
    estimate->add_option("--trials", trials, "independent sample streams");
    add_seed(estimate);
    add_out(estimate);

    // run
    auto* run = app.add_subcommand("run", "split experiments (CSV)");
    std::optional<std::string> data_path, synthetic_spec;
    std::string variant = "p1p2";
    std::vector<double> alphas{0.1};
    std::vector<double> budgets{20.0};
    int splits = 50;
    int jobs = 0;
    bool no_split_cal = false;
    run->add_option("--data", data_path, "replay records (JSONL)");
    run->add_option("--synthetic", synthetic_spec, "generate a task, e.g. n=500");
    run->add_option("--variant", variant, "vanilla, p1, or p1p2");
    run->add_option("--alpha", alphas, "miscoverage levels")->delimiter(',');
    run->add_option("--budget", budgets, "average query budgets")->delimiter(',');
    run->add_option("--splits", splits, "random cal/test splits");
    run->add_option("--jobs", jobs, "worker threads (0 = auto)");
    run->add_flag("--no-split-cal", no_split_cal, "tune and fit on the whole calibration half");
    add_seed(run);
    add_out(run);

    // tune-beta
    auto* tune = app.add_subcommand("tune-beta", "pick a stopping threshold (JSON)");
    std::string tune_data;
    double tune_budget = 20.0;
    tune->add_option("--data", tune_data, "replay records (JSONL)")->required();
    tune->add_option("--budget", tune_budget, "average query budget")->required();
    add_seed(tune);
    add_out(tune);

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "fit a model (JSON)");
    std::string cal_data;
    double cal_alpha = 0.1;
    double cal_budget = 20.0;
    bool cal_no_split = false;
    calibrate->add_option("--data", cal_data, "replay records (JSONL)")->required();
    calibrate->add_option("--alpha", cal_alpha, "miscoverage level")->required();
    calibrate->add_option("--budget", cal_budget, "average query budget")->required();
    calibrate->add_flag("--no-split-cal", cal_no_split,
                        "tune and fit on the whole calibration set");
    add_seed(calibrate);
    add_out(calibrate);

    // predict
    auto* predict = app.add_subcommand("predict", "prediction sets under a model (JSONL)");
    std::string pred_model, pred_data;
    predict->add_option("--model", pred_model, "model JSON from calibrate")->required();
    predict->add_option("--data", pred_data, "replay records (JSONL)")->required();
    add_out(predict);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
            e.get_name() == "CallForVersion")
            return app.exit(e);
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (estimate->parsed())
            return cmd_estimate(dist_spec, t_max, trials, common, out);
        if (run->parsed())
            return cmd_run(data_path, synthetic_spec, variant, alphas, budgets, splits, jobs,
                           no_split_cal, common, out);
        if (tune->parsed())
            return cmd_tune_beta(tune_data, tune_budget, common, out);
        if (calibrate->parsed())
            return cmd_calibrate(cal_data, cal_alpha, cal_budget, cal_no_split, common, out);
        if (predict->parsed())
            return cmd_predict(pred_model, pred_data, out);
    } catch (const cpq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case cpq::ErrorKind::io:
            return 3;
        case cpq::ErrorKind::infeasible_calibration:
            return 4;
        case cpq::ErrorKind::model_mismatch:
            return 5;
        default:
            return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
