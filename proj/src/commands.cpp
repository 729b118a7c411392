#include "ridge_relay/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ridge_relay/baselines.hpp"
#include "ridge_relay/cli_io.hpp"
#include "ridge_relay/logistic_estimator.hpp"
#include "ridge_relay/sim_harness.hpp"

namespace ridge_relay {

using nlohmann::json;

PenaltySearchConfig CliConfig::search(bool default_constrained) const {
    PenaltySearchConfig config;
    config.grid = PenaltySearchConfig::log_grid(grid_min, grid_max, grid_points);
    config.loocv = loocv;
    if (k_folds) config.K = *k_folds;
    config.constrained = constrained.value_or(default_constrained);
    config.seed = seed;
    config.validate();
    return config;
}

namespace {

Family state_family_check(const CliConfig& cli, Family state_family) {
    if (cli.family && *cli.family != state_family)
        throw ConfigError("--family " + std::string(to_string(*cli.family)) +
                          " does not match the state's family " + std::string(to_string(state_family)));
    return state_family;
}

void require(const std::filesystem::path& path, const char* flag) {
    if (path.empty()) throw ConfigError(std::string(flag) + " is required");
}

json update_summary(const EstimatorState& before, const EstimatorState& after,
                    const SelectionReport& report, bool committed) {
    std::vector<std::string> added;
    for (const auto& name : after.registry.names())
        if (!before.registry.contains(name)) added.push_back(name);
    int feasible = 0;
    for (const auto& point : report.cv_curve) feasible += point.feasible ? 1 : 0;
    const auto& record = after.history.back();
    return {{"committed", committed},
            {"t", after.t},
            {"family", std::string(to_string(after.family))},
            {"chosen_lambda", encode_double(report.chosen_lambda)},
            {"chosen_weights", report.chosen_weights},
            {"constrained", report.constrained},
            {"constraint_evaluated", report.constraint_evaluated},
            {"fallback_used", report.fallback_used},
            {"feasible_candidates", feasible},
            {"candidates", report.cv_curve.size()},
            {"f_t", encode_double(report.f_t)},
            {"folds", report.folds},
            {"fit_loss", encode_double(record.fit_loss)},
            {"iterations", record.iterations},
            {"new_covariates", added},
            {"estimate", to_json(after.current)},
            {"selection", to_json(report)}};
}

}  // namespace

int cmd_init(const CliConfig& cli, std::ostream& out) {
    require(cli.state, "--state");
    if (std::filesystem::exists(cli.state) && !cli.force)
        throw ConfigError(cli.state.string() + " exists; pass --force to overwrite");
    const int sources = (!cli.covariates.empty() ? 1 : 0) + (!cli.target.empty() ? 1 : 0) +
                        (!cli.data.empty() ? 1 : 0);
    if (sources != 1)
        throw ConfigError("init needs exactly one of --covariates, --target or --data");
    const Family family = cli.family.value_or(Family::linear);

    EstimatorState state;
    if (!cli.covariates.empty()) {
        CovariateRegistry check;  // rejects duplicates via size mismatch below
        check.add_all(cli.covariates);
        if (check.size() != cli.covariates.size()) throw ConfigError("duplicate covariate names");
        state = EstimatorState::initial(family, CoefficientVector::zeros(cli.covariates), "zero");
    } else if (!cli.target.empty()) {
        const auto text = read_file(cli.target);
        json node;
        try {
            node = json::parse(text);
        } catch (const json::parse_error& e) {
            throw StateError("target file is not valid JSON: " + std::string(e.what()));
        }
        auto target = coefficients_from_json(node);
        if (target.empty()) throw StateError("target file names no covariates");
        state = EstimatorState::initial(family, std::move(target), "explicit:" + cli.target.filename().string());
    } else {
        // Sacrificial first batch: plain ridge (zero target) with LOOCV unless --k-folds is given.
        const Batch batch = batch_from_table(read_csv(cli.data), cli.response, family, 1);
        CliConfig first = cli;
        first.loocv = !cli.k_folds.has_value();
        first.constrained = false;
        const auto zero = EstimatorState::initial(family, CoefficientVector::zeros(batch.covariates()));
        const auto [fitted, report] = update_with_selection(zero, batch, first.search(false));
        state = EstimatorState::initial(family, fitted.current, "fit-first-batch");
        json summary = {{"chosen_lambda", encode_double(report.chosen_lambda)},
                        {"folds", report.folds},
                        {"estimate", to_json(fitted.current)}};
        out << summary.dump(2) << "\n";
    }
    write_state(cli.state, state);
    return kExitOk;
}

namespace {

int run_update(const CliConfig& cli, std::ostream& out, bool commit) {
    require(cli.state, "--state");
    require(cli.data, "--data");
    std::optional<StateLock> lock;
    if (commit) lock.emplace(cli.state);
    const EstimatorState state = read_state(cli.state);
    const Family family = state_family_check(cli, state.family);
    const Batch batch = batch_from_table(read_csv(cli.data), cli.response, family, state.t + 1);
    const auto search = cli.search(true);

    auto [next, report] = update_with_selection(state, batch, search);
    maybe_kill_at("after-fit");
    if (commit) write_state(cli.state, next);
    if (!cli.out.empty() && !commit)
        write_plot_dataset(cli.out, cv_curve_dataset("cv_curve_t" + std::to_string(next.t), report));
    out << update_summary(state, next, report, commit).dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int cmd_update(const CliConfig& cli, std::ostream& out) { return run_update(cli, out, true); }

int cmd_select_lambda(const CliConfig& cli, std::ostream& out) { return run_update(cli, out, false); }

int cmd_predict(const CliConfig& cli, std::ostream& out) {
    require(cli.state, "--state");
    require(cli.data, "--data");
    const EstimatorState state = read_state(cli.state);
    state_family_check(cli, state.family);
    const CsvTable table = read_csv(cli.data);
    std::optional<std::string> response;
    if (std::find(table.header.begin(), table.header.end(), cli.response) != table.header.end())
        response = cli.response;
    const auto [names, X] = design_from_table(table, response);

    Eigen::MatrixXd aligned = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(state.registry.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto index = state.registry.find(names[j]);
        if (!index) throw CsvError("covariate '" + names[j] + "' is not in the state's registry");
        aligned.col(static_cast<Eigen::Index>(*index)) = X.col(static_cast<Eigen::Index>(j));
    }
    const Eigen::VectorXd eta = aligned * state.current.to_dense(state.registry);
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        out << format_double(state.family == Family::logistic ? logistic(eta[i]) : eta[i]) << "\n";
    return kExitOk;
}

int cmd_export(const CliConfig& cli, std::ostream& out) {
    require(cli.state, "--state");
    const EstimatorState state = read_state(cli.state);
    std::ostringstream table;
    table << "covariate,estimate,init_target,last_seen_t\n";
    for (const auto& name : state.registry.names()) {
        int last_seen = 0;
        for (const auto& record : state.history)
            if (std::find(record.observed.begin(), record.observed.end(), name) != record.observed.end())
                last_seen = record.t;
        const auto init = state.init_target.get(name);
        table << name << "," << format_double(state.current.get(name).value_or(0.0)) << ","
              << (init ? format_double(*init) : std::string("")) << "," << last_seen << "\n";
    }
    if (cli.out.empty()) {
        out << table.str();
    } else {
        write_file_atomic(cli.out, table.str());
    }
    return kExitOk;
}

int cmd_simulate(const CliConfig& cli, std::ostream& out) {
    require(cli.config, "--config");
    require(cli.out, "--out");
    const ScenarioConfig config = read_scenario(cli.config);

    std::vector<PlotDataset> datasets;
    std::vector<TrajectoryResult> results;
    if (config.study == "regular_vs_updated") {
        auto [regular, updated] = run_study_regular_vs_updated(config);
        results.push_back(std::move(regular));
        results.push_back(std::move(updated));
    } else {
        auto [mixed, zero, truth] = run_study_mixed_vs_updated(config);
        results.push_back(std::move(mixed));
        results.push_back(std::move(zero));
        results.push_back(std::move(truth));
    }
    std::vector<const TrajectoryResult*> views;
    for (const auto& result : results) {
        datasets.push_back(quantile_dataset(result));
        views.push_back(&result);
    }
    datasets.push_back(mse_dataset("mse", views));

    for (auto& ds : datasets) {
        ds.metadata["study"] = config.study;
        ds.metadata["seed"] = std::to_string(config.seed);
        ds.metadata["p"] = std::to_string(config.p);
        ds.metadata["n"] = std::to_string(config.n);
        ds.metadata["n_batches"] = std::to_string(config.n_batches);
        ds.metadata["n_replicates"] = std::to_string(config.n_replicates);
        ds.metadata["empty_every"] = std::to_string(config.empty_every);
        ds.metadata["config"] = to_json(config).dump();
        write_plot_dataset(cli.out, ds);
        out << (cli.out / (ds.name + ".csv")).string() << "\n";
    }
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sequential targeted ridge updating of (generalized) linear models", "ridge_relay"};
    app.require_subcommand(1);
    CliConfig cli;
    std::string family_text;
    bool constrained = false, unconstrained = false;
    int k_folds = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--state", cli.state, "State file (JSON)");
        sub->add_option("--family", family_text, "Model family")->check(CLI::IsMember({"linear", "logistic"}));
        sub->add_option("--response", cli.response, "Response column name")->capture_default_str();
    };
    auto add_search = [&](CLI::App* sub) {
        sub->add_option("--data", cli.data, "Batch CSV with a header row");
        auto* kf = sub->add_option("--k-folds", k_folds, "Number of CV folds (default 5)")
                       ->check(CLI::Range(2, 1 << 30));
        auto* lo = sub->add_flag("--loocv", cli.loocv, "Leave-one-out CV");
        kf->excludes(lo);
        auto* c = sub->add_flag("--constrained", constrained, "Restrict to the historic-fit feasible set");
        auto* u = sub->add_flag("--unconstrained", unconstrained, "Plain CV over the whole grid");
        c->excludes(u);
        sub->add_option("--grid-min", cli.grid_min, "Smallest lambda")->capture_default_str();
        sub->add_option("--grid-max", cli.grid_max, "Largest lambda")->capture_default_str();
        sub->add_option("--grid-points", cli.grid_points, "Log-spaced grid size")->capture_default_str();
        sub->add_option("--seed", cli.seed, "Fold-assignment seed")->capture_default_str();
    };

    auto* init = app.add_subcommand("init", "Create a state file");
    add_common(init);
    add_search(init);
    auto* cov = init->add_option("--covariates", cli.covariates, "Zero target over these names")->delimiter(',');
    auto* tgt = init->add_option("--target", cli.target, "JSON object of initial coefficients");
    cov->excludes(tgt);
    init->add_flag("--force", cli.force, "Overwrite an existing state file");

    auto* update = app.add_subcommand("update", "Fit the next batch and advance the state");
    add_common(update);
    add_search(update);

    auto* select = app.add_subcommand("select-lambda", "Penalty selection without committing");
    add_common(select);
    add_search(select);
    select->add_option("--out", cli.out, "Directory for the CV-curve plot data");

    auto* predict = app.add_subcommand("predict", "Predictions for the rows of a CSV");
    add_common(predict);
    predict->add_option("--data", cli.data, "CSV of covariates (header row)");

    auto* exp = app.add_subcommand("export", "Coefficient table of the current state");
    add_common(exp);
    exp->add_option("--out", cli.out, "Write the table here instead of stdout");

    auto* simulate = app.add_subcommand("simulate", "Run a simulation study and emit plot data");
    simulate->add_option("--config", cli.config, "Scenario config (JSON)")->required();
    simulate->add_option("--out", cli.out, "Output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (!family_text.empty()) cli.family = parse_family(family_text);
        if (k_folds > 0) cli.k_folds = k_folds;
        if (constrained) cli.constrained = true;
        if (unconstrained) cli.constrained = false;

        if (init->parsed()) return cmd_init(cli, out);
        if (update->parsed()) return cmd_update(cli, out);
        if (select->parsed()) return cmd_select_lambda(cli, out);
        if (predict->parsed()) return cmd_predict(cli, out);
        if (exp->parsed()) return cmd_export(cli, out);
        if (simulate->parsed()) return cmd_simulate(cli, out);
        return kExitOther;
    } catch (const ConvergenceError& e) {
        err << "ridge_relay: IRLS did not converge: " << e.what() << " (state unchanged)\n";
        return kExitConvergence;
    } catch (const SelectionError& e) {
        err << "ridge_relay: penalty selection failed: " << e.what() << "\n";
        return kExitSelection;
    } catch (const SingularityError& e) {
        err << "ridge_relay: singular system: " << e.what() << "\n";
        return kExitSelection;
    } catch (const EstimationError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitSelection;
    } catch (const LockError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitOther;
    } catch (const CsvError& e) {
        err << "ridge_relay: CSV error: " << e.what() << "\n";
        return kExitInput;
    } catch (const StateError& e) {
        err << "ridge_relay: state error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ConfigError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitInput;
    } catch (const ValidationError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitInput;
    } catch (const RegistryError& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        err << "ridge_relay: " << e.what() << "\n";
        return kExitOther;
    }
}

}  // namespace ridge_relay
