// Command-line front end: data loading, MTD estimation, network and
// assortativity export, single-shot optimization, rolling backtest, and
// plot-data emission.
//
// Exit codes: 0 ok, 2 input error, 3 degenerate computation, 4 infeasible.

#include "mtdnet/assortativity.hpp"
#include "mtdnet/backtest.hpp"
#include "mtdnet/loess.hpp"
#include "mtdnet/marketdata.hpp"
#include "mtdnet/mtd.hpp"
#include "mtdnet/network.hpp"
#include "mtdnet/portfolio.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace mtdnet;

struct GlobalOpts {
    std::string config_path;
    std::string output_dir = ".";
    std::uint64_t seed = 0;
    json cfg = json::object();
};

/// CLI flag wins over config-file key wins over built-in default.
template <typename T>
T pick(const CLI::Option* opt, const T& cli_value, const json& cfg, const std::string& key,
       const T& fallback) {
    if (opt != nullptr && opt->count() > 0) return cli_value;
    if (cfg.contains(key)) return cfg.at(key).get<T>();
    return fallback;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    std::filesystem::create_directories(g.output_dir);
    return (std::filesystem::path(g.output_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

StateScheme scheme_from_string(const std::string& s) {
    if (s == "sign") return StateScheme::sign;
    if (s == "quantile") return StateScheme::quantile;
    throw InputError("unknown state scheme: " + s + " (expected sign or quantile)");
}

Measure measure_from_string(const std::string& s) {
    if (s == "global") return Measure::global;
    if (s == "piraveenan") return Measure::piraveenan;
    if (s == "sabek") return Measure::sabek;
    if (s == "peel") return Measure::peel;
    throw InputError("unknown measure: " + s);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

struct EstimateArgs {
    std::string prices;
    std::string output = "model.json";
    std::string scheme = "sign";
    int num_states = 3;
    double smoothing = 1.0;
    int restarts = 3;
    int max_iters = 5000;
    double tol = 1e-7;
    CLI::Option* scheme_opt = nullptr;
    CLI::Option* states_opt = nullptr;
    CLI::Option* smoothing_opt = nullptr;
};

MtdModel fit_model(const std::string& prices_path, const EstimateArgs& a, const GlobalOpts& g) {
    const PricePanel prices = load_prices(prices_path);
    if (prices.dropped_rows > 0)
        std::cerr << "note: dropped " << prices.dropped_rows << " rows with missing or"
                  << " non-positive prices\n";
    const ReturnPanel rets = log_returns(prices);
    const StateScheme scheme =
        scheme_from_string(pick(a.scheme_opt, a.scheme, g.cfg, "state_scheme", a.scheme));
    const int num_states = pick(a.states_opt, a.num_states, g.cfg, "num_states", a.num_states);
    const double smoothing = pick(a.smoothing_opt, a.smoothing, g.cfg, "smoothing", a.smoothing);

    const StatePanel states = discretize(rets, scheme, num_states);
    MtdModel model;
    model.tickers = rets.tickers;
    model.num_states = states.num_states;
    model.smoothing = smoothing;
    model.P = estimate_transition_matrices(states, smoothing);
    LambdaOptions lopts;
    lopts.seed = g.seed;
    lopts.restarts = a.restarts;
    lopts.max_iters = a.max_iters;
    lopts.tol = a.tol;
    model.lambda = estimate_lambda(states, model.P, lopts);
    return model;
}

int cmd_estimate(const EstimateArgs& a, const GlobalOpts& g) {
    const MtdModel model = fit_model(a.prices, a, g);
    write_model(model, out_path(g, a.output));
    std::cout << "wrote " << out_path(g, a.output) << "\n";
    return 0;
}

DirectedNetwork load_network_arg(const std::string& network_path, const std::string& model_path,
                                 const std::string& prices_path, const std::string& source) {
    if (!network_path.empty()) return read_network(network_path);
    if (!model_path.empty()) return from_lambda(read_model(model_path));
    if (!prices_path.empty()) {
        if (source != "correlation")
            throw InputError("building a network from prices requires --source correlation "
                             "(use `estimate` first for the mtd network)");
        return from_correlation(log_returns(load_prices(prices_path)));
    }
    throw InputError("need --network, --model, or --prices to identify the network");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MTD financial networks, assortativity, and penalized portfolios"};
    app.require_subcommand(1);

    GlobalOpts g;
    auto* cfg_opt = app.add_option("--config", g.config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
    app.add_option("--output-dir", g.output_dir, "directory for output files");

    // estimate
    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "fit the MTD model from a price CSV");
    estimate->add_option("--prices", est.prices, "price CSV (date,TICKER,...)")->required();
    estimate->add_option("--output", est.output, "model file name");
    est.scheme_opt = estimate->add_option("--state-scheme", est.scheme, "sign or quantile");
    est.states_opt = estimate->add_option("--num-states", est.num_states, "state count");
    est.smoothing_opt = estimate->add_option("--smoothing", est.smoothing, "transition pseudo-count");
    estimate->add_option("--restarts", est.restarts, "lambda multistart count");
    estimate->add_option("--max-iters", est.max_iters, "lambda iteration cap");
    estimate->add_option("--tol", est.tol, "lambda stationarity tolerance");

    // network
    std::string net_model, net_prices, net_source = "mtd";
    auto* network = app.add_subcommand("network", "export a network as edge CSV + JSON");
    network->add_option("--model", net_model, "fitted model JSON");
    network->add_option("--prices", net_prices, "price CSV (with --source correlation)");
    network->add_option("--source", net_source, "mtd or correlation");

    // assort
    std::string as_network, as_model, as_measure = "all", as_modality = "all";
    int as_quadrature = 21;
    auto* assort = app.add_subcommand("assort", "compute assortativity measures");
    assort->add_option("--network", as_network, "network JSON");
    assort->add_option("--model", as_model, "fitted model JSON");
    assort->add_option("--measure", as_measure, "global|piraveenan|sabek|peel|all");
    assort->add_option("--modality", as_modality, "in-in|in-out|out-in|out-out|all");
    assort->add_option("--quadrature", as_quadrature, "multiscale quadrature points");

    // optimize
    std::string opt_instance;
    bool opt_exact = false, opt_stdev = false;
    auto* optimize = app.add_subcommand("optimize", "solve one portfolio instance");
    optimize->add_option("--instance", opt_instance, "instance JSON")->required();
    optimize->add_flag("--exact", opt_exact, "force branch-and-bound");
    optimize->add_flag("--stdev-denominator", opt_stdev, "conventional Sharpe objective");

    // backtest
    struct {
        std::string prices;
        Index in_len = 90, out_len = 30, step = 30;
        std::string measures = "piraveenan,sabek,peel";
        std::string modalities = "in-in,in-out,out-in,out-out";
        std::string forms = "weighted,simple";
        std::string objectives = "utility,sharpe";
        std::string scheme = "sign";
        std::string source = "mtd";
        int num_states = 3;
        double smoothing = 1.0;
        double delta = 1.0, gamma = 0.01, scale = 1.0;
        int quadrature = 21;
        bool no_correlation_variant = false;
        bool exact = false, stdev = false;
        CLI::Option* in_opt = nullptr;
        CLI::Option* out_opt = nullptr;
        CLI::Option* step_opt = nullptr;
        CLI::Option* scheme_opt = nullptr;
        CLI::Option* states_opt = nullptr;
        CLI::Option* delta_opt = nullptr;
        CLI::Option* gamma_opt = nullptr;
        CLI::Option* scale_opt = nullptr;
        CLI::Option* smoothing_opt = nullptr;
    } bt;
    auto* backtest = app.add_subcommand("backtest", "run the rolling-window experiment");
    backtest->add_option("--prices", bt.prices, "price CSV")->required();
    bt.in_opt = backtest->add_option("--in-len", bt.in_len, "in-sample length (days)");
    bt.out_opt = backtest->add_option("--out-len", bt.out_len, "out-of-sample length (days)");
    bt.step_opt = backtest->add_option("--step", bt.step, "window step (days)");
    backtest->add_option("--measures", bt.measures, "comma list of local measures");
    backtest->add_option("--modalities", bt.modalities, "comma list of modalities");
    backtest->add_option("--forms", bt.forms, "comma list of penalty forms");
    backtest->add_option("--objectives", bt.objectives, "comma list of objectives");
    bt.scheme_opt = backtest->add_option("--state-scheme", bt.scheme, "sign or quantile");
    bt.states_opt = backtest->add_option("--num-states", bt.num_states, "state count");
    bt.smoothing_opt = backtest->add_option("--smoothing", bt.smoothing, "transition pseudo-count");
    bt.delta_opt = backtest->add_option("--delta", bt.delta, "risk aversion");
    bt.gamma_opt = backtest->add_option("--gamma", bt.gamma, "minimum selected weight");
    bt.scale_opt = backtest->add_option("--scale", bt.scale, "penalty scale");
    backtest->add_option("--source", bt.source, "network source: mtd or correlation");
    backtest->add_option("--quadrature", bt.quadrature, "multiscale quadrature points");
    backtest->add_flag("--no-correlation-variant", bt.no_correlation_variant,
                       "skip the per-measure correlation benchmark");
    backtest->add_flag("--exact", bt.exact, "force branch-and-bound in every solve");
    backtest->add_flag("--stdev-denominator", bt.stdev, "conventional Sharpe objective");

    // plotdata
    std::string pd_backtest, pd_kind = "node-profile", pd_measures = "piraveenan,sabek,peel";
    std::string pd_modalities = "in-in,in-out,out-in,out-out";
    double pd_span = 0.75;
    int pd_grid = 100, pd_quadrature = 21;
    auto* plotdata = app.add_subcommand("plotdata", "loess profiles from backtest artifacts");
    plotdata->add_option("--backtest", pd_backtest, "backtest JSON artifact")->required();
    plotdata->add_option("--kind", pd_kind, "node-profile or edge-profile");
    plotdata->add_option("--measures", pd_measures, "comma list for node profiles");
    plotdata->add_option("--modalities", pd_modalities, "comma list of modalities");
    plotdata->add_option("--span", pd_span, "loess span fraction");
    plotdata->add_option("--grid", pd_grid, "loess evaluation grid size");
    plotdata->add_option("--quadrature", pd_quadrature, "multiscale quadrature points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cfg_opt->count() > 0) {
            std::ifstream in(g.config_path);
            if (!in) throw InputError("cannot open config file: " + g.config_path);
            try {
                in >> g.cfg;
            } catch (const json::exception& e) {
                throw InputError("malformed config JSON: " + std::string(e.what()));
            }
        }
        g.seed = pick(seed_opt, g.seed, g.cfg, "seed", g.seed);

        if (app.got_subcommand(estimate)) return cmd_estimate(est, g);

        if (app.got_subcommand(network)) {
            const DirectedNetwork net = load_network_arg("", net_model, net_prices, net_source);
            std::ostringstream edges;
            write_edge_csv(net, edges);
            write_text(out_path(g, "edges.csv"), edges.str());
            write_network(net, out_path(g, "network.json"));
            std::cout << "wrote " << out_path(g, "edges.csv") << " and "
                      << out_path(g, "network.json") << "\n";
            return 0;
        }

        if (app.got_subcommand(assort)) {
            const DirectedNetwork net = load_network_arg(as_network, as_model, "", "mtd");
            std::vector<Measure> measures;
            if (as_measure == "all")
                measures = {Measure::global, Measure::piraveenan, Measure::sabek, Measure::peel};
            else
                measures = {measure_from_string(as_measure)};
            std::vector<Modality> modalities;
            if (as_modality == "all")
                modalities.assign(all_modalities().begin(), all_modalities().end());
            else
                modalities = {modality_from_string(as_modality)};

            std::vector<AssortativityResult> results;
            for (Measure m : measures)
                for (Modality mode : modalities)
                    results.push_back(compute_assortativity(net, m, mode, as_quadrature));
            std::ostringstream csv;
            write_assortativity_csv(results, net.tickers, csv);
            write_text(out_path(g, "assortativity.csv"), csv.str());
            std::cout << "wrote " << out_path(g, "assortativity.csv") << " (" << results.size()
                      << " result blocks)\n";
            return 0;
        }

        if (app.got_subcommand(optimize)) {
            std::ifstream in(opt_instance);
            if (!in) throw InputError("cannot open instance file: " + opt_instance);
            json ij;
            try {
                in >> ij;
            } catch (const json::exception& e) {
                throw InputError("malformed instance JSON: " + std::string(e.what()));
            }
            const PortfolioInstance inst = instance_from_json(ij);
            SolveOptions opts;
            opts.force_exact = opt_exact;
            opts.stdev_denominator = opt_stdev;
            const PortfolioSolution sol =
                inst.objective == PortfolioObjective::utility
                    ? max_quadratic_utility(inst.moments, inst.spec, inst.delta, inst.gamma, opts)
                    : max_sharpe(inst.moments, inst.spec, inst.gamma, opts);
            if (sol.degenerate)
                std::cerr << "note: no positive-return direction; best feasible returned\n";
            write_text(out_path(g, "solution.json"), solution_to_json(sol).dump(2) + "\n");
            std::cout << "objective " << format_g17(sol.objective) << " status "
                      << to_string(sol.status) << "; wrote " << out_path(g, "solution.json")
                      << "\n";
            return 0;
        }

        if (app.got_subcommand(backtest)) {
            BacktestConfig config;
            config.in_len = pick(bt.in_opt, bt.in_len, g.cfg, "in_len", config.in_len);
            config.out_len = pick(bt.out_opt, bt.out_len, g.cfg, "out_len", config.out_len);
            config.step = pick(bt.step_opt, bt.step, g.cfg, "step", config.step);
            config.scheme = scheme_from_string(
                pick(bt.scheme_opt, bt.scheme, g.cfg, "state_scheme", bt.scheme));
            config.num_states = pick(bt.states_opt, bt.num_states, g.cfg, "num_states", bt.num_states);
            config.smoothing = pick(bt.smoothing_opt, bt.smoothing, g.cfg, "smoothing", bt.smoothing);
            config.delta = pick(bt.delta_opt, bt.delta, g.cfg, "delta", bt.delta);
            config.gamma = pick(bt.gamma_opt, bt.gamma, g.cfg, "gamma", bt.gamma);
            config.scale = pick(bt.scale_opt, bt.scale, g.cfg, "scale", bt.scale);
            config.seed = g.seed;
            config.source = network_source_from_string(bt.source);
            config.quadrature_points = bt.quadrature;
            config.correlation_variant = !bt.no_correlation_variant;
            config.solve_opts.force_exact = bt.exact;
            config.solve_opts.stdev_denominator = bt.stdev;

            config.measures.clear();
            for (const auto& s : split_list(bt.measures)) config.measures.push_back(measure_from_string(s));
            config.modalities.clear();
            for (const auto& s : split_list(bt.modalities)) config.modalities.push_back(modality_from_string(s));
            config.forms.clear();
            for (const auto& s : split_list(bt.forms)) config.forms.push_back(penalty_form_from_string(s));
            config.objectives.clear();
            for (const auto& s : split_list(bt.objectives)) config.objectives.push_back(objective_from_string(s));

            const PricePanel prices = load_prices(bt.prices);
            const BacktestReport report = run_backtest(prices, config);

            std::ostringstream oos, ins, stats;
            write_report_csv(report.rows, oos, false);
            write_report_csv(report.rows, ins, true);
            write_stats_csv(report.stats, stats);
            write_text(out_path(g, "report_outsample.csv"), oos.str());
            write_text(out_path(g, "report_insample.csv"), ins.str());
            write_text(out_path(g, "assortativity_stats.csv"), stats.str());
            write_text(out_path(g, "backtest.json"), report.windows.dump(2) + "\n");
            std::cout << "wrote report_outsample.csv, report_insample.csv, "
                         "assortativity_stats.csv, backtest.json in "
                      << g.output_dir << "\n";
            return 0;
        }

        if (app.got_subcommand(plotdata)) {
            std::ifstream in(pd_backtest);
            if (!in) throw InputError("cannot open backtest artifact: " + pd_backtest);
            json bj;
            try {
                in >> bj;
            } catch (const json::exception& e) {
                throw InputError("malformed backtest JSON: " + std::string(e.what()));
            }
            const auto tickers = bj.at("tickers").get<std::vector<std::string>>();
            const Index n = static_cast<Index>(tickers.size());

            std::vector<DirectedNetwork> nets;
            for (const auto& rec : bj.at("records")) {
                const std::string key = rec.contains("W_mtd") ? "W_mtd" : "W_correlation";
                const auto w = rec.at(key).get<std::vector<double>>();
                MatrixXd W(n, n);
                for (Index r = 0; r < n; ++r)
                    for (Index c = 0; c < n; ++c) W(r, c) = w[static_cast<std::size_t>(r * n + c)];
                nets.push_back(make_network(std::move(W), tickers));
            }
            if (nets.empty()) throw InputError("backtest artifact has no window records");

            std::vector<Modality> modalities;
            for (const auto& s : split_list(pd_modalities)) modalities.push_back(modality_from_string(s));

            std::vector<PlotProfile> profiles;
            if (pd_kind == "node-profile") {
                std::vector<Measure> measures;
                for (const auto& s : split_list(pd_measures)) measures.push_back(measure_from_string(s));
                for (Measure m : measures)
                    for (Modality mode : modalities) {
                        std::vector<double> xs, ys;
                        for (const auto& net : nets) {
                            std::optional<AssortativityResult> res;
                            try {
                                res = compute_assortativity(net, m, mode, pd_quadrature);
                            } catch (const DegenerateError&) {
                                continue;
                            }
                            for (Index i = 0; i < net.n; ++i) {
                                if (net.d_out[i] == 0) continue;
                                // node-level average excess out-strength over out-edges
                                const double avg_es =
                                    net.s_out[i] -
                                    net.s_out[i] / static_cast<double>(net.d_out[i]);
                                xs.push_back(avg_es);
                                ys.push_back(res->rho_local[i]);
                            }
                        }
                        if (xs.size() < 5) continue;
                        PlotProfile p = loess_smooth(xs, ys, pd_span, pd_grid);
                        p.series = to_string(m) + "/" + to_string(mode);
                        profiles.push_back(std::move(p));
                    }
            } else if (pd_kind == "edge-profile") {
                for (Modality mode : modalities) {
                    std::vector<double> xs, ys;
                    for (const auto& net : nets) {
                        std::optional<AssortativityResult> res;
                        try {
                            res = local_sabek(net, mode);
                        } catch (const DegenerateError&) {
                            continue;
                        }
                        for (Index i = 0; i < net.n; ++i)
                            for (Index j = 0; j < net.n; ++j) {
                                if (!net.has_edge(i, j)) continue;
                                const double e = edge_assortativity_sabek(net, i, j, mode);
                                xs.push_back(net.W(i, j));
                                ys.push_back(e);
                            }
                    }
                    if (xs.size() < 5) continue;
                    PlotProfile p = loess_smooth(xs, ys, pd_span, pd_grid);
                    p.series = "edge/" + to_string(mode);
                    profiles.push_back(std::move(p));
                }
            } else {
                throw InputError("unknown plot kind: " + pd_kind);
            }

            std::ostringstream csv;
            write_profiles_csv(profiles, csv);
            write_text(out_path(g, "plotdata.csv"), csv.str());
            std::cout << "wrote " << out_path(g, "plotdata.csv") << " (" << profiles.size()
                      << " profiles)\n";
            return 0;
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DegenerateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
