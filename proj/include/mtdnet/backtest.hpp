#pragma once

#include "mtdnet/assortativity.hpp"
#include "mtdnet/common.hpp"
#include "mtdnet/marketdata.hpp"
#include "mtdnet/mtd.hpp"
#include "mtdnet/network.hpp"
#include "mtdnet/portfolio.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mtdnet {

enum class NetworkSource { mtd, correlation };

inline std::string to_string(NetworkSource s) {
    return s == NetworkSource::mtd ? "mtd" : "correlation";
}

inline NetworkSource network_source_from_string(const std::string& s) {
    if (s == "mtd") return NetworkSource::mtd;
    if (s == "correlation") return NetworkSource::correlation;
    throw InputError("unknown network source: " + s);
}

struct BacktestConfig {
    Index in_len = 90;
    Index out_len = 30;
    Index step = 30;
    std::vector<Measure> measures{Measure::piraveenan, Measure::sabek, Measure::peel};
    std::vector<Modality> modalities{all_modalities().begin(), all_modalities().end()};
    bool correlation_variant = true; // per-measure benchmark on the correlation network
    std::vector<PenaltyForm> forms{PenaltyForm::weighted, PenaltyForm::simple};
    std::vector<PortfolioObjective> objectives{PortfolioObjective::utility,
                                               PortfolioObjective::sharpe};
    double delta = 1.0;
    double gamma = 0.01;
    double scale = 1.0;
    std::uint64_t seed = 0;
    NetworkSource source = NetworkSource::mtd;
    StateScheme scheme = StateScheme::sign;
    int num_states = 3;
    double smoothing = 1.0;
    LambdaOptions lambda_opts;
    int quadrature_points = 21;
    SolveOptions solve_opts;
};

/// One line of the performance tables. `variant` is "correlation" or a
/// modality name; benchmark rows carry measure "markowitz".
struct ReportRow {
    std::string measure;
    std::string variant;
    PortfolioObjective objective = PortfolioObjective::utility;
    PenaltyForm form = PenaltyForm::none;
    double expected_return = 0.0;   // out-of-sample unless stated otherwise
    double annual_volatility = 0.0;
    double sharpe_ratio = 0.0;
    double is_expected_return = 0.0; // in-sample analogues
    double is_annual_volatility = 0.0;
    double is_sharpe_ratio = 0.0;
    double mean_assortativity = 0.0; // achieved R averaged over solved windows
    bool has_assortativity = false;
    Index windows_solved = 0;
    Index windows_fallback = 0;
};

/// One line of the network-statistics table.
struct AssortativityStats {
    Measure measure = Measure::piraveenan;
    Modality modality{StrengthMode::in, StrengthMode::in};
    double mean_rho_g = 0.0;
    double p_positive = 0.0;
    double mean_positive = 0.0; // NaN when no positive locals
    double mean_negative = 0.0; // NaN when no negative locals
    Index windows_used = 0;
};

struct BacktestReport {
    std::vector<ReportRow> rows;
    std::vector<AssortativityStats> stats;
    nlohmann::json windows; // per-window records and diagnostics
};

/// annual_return = 252 * daily_mean, annual_vol = sqrt(252) * daily_std.
inline std::pair<double, double> annualize(double daily_mean, double daily_std) {
    return {252.0 * daily_mean, std::sqrt(252.0) * daily_std};
}

namespace detail {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace detail

/// Averages the per-window statistics of one (measure, modality) pair from
/// precomputed results; degenerate windows are skipped by passing them as
/// nullopt.
inline AssortativityStats
assortativity_statistics(const std::vector<std::optional<AssortativityResult>>& per_window,
                         Measure measure, Modality modality) {
    AssortativityStats stats;
    stats.measure = measure;
    stats.modality = modality;
    double sum_g = 0.0, sum_pos = 0.0, sum_neg = 0.0;
    Index n_pos = 0, n_neg = 0, n_nodes = 0;
    for (const auto& res : per_window) {
        if (!res) continue;
        ++stats.windows_used;
        sum_g += res->rho_g;
        for (Index i = 0; i < res->rho_local.size(); ++i) {
            ++n_nodes;
            const double v = res->rho_local[i];
            if (v > 0.0) {
                ++n_pos;
                sum_pos += v;
            } else if (v < 0.0) {
                ++n_neg;
                sum_neg += v;
            }
        }
    }
    if (stats.windows_used == 0)
        throw DegenerateError("assortativity statistics: every window was degenerate");
    stats.mean_rho_g = sum_g / static_cast<double>(stats.windows_used);
    stats.p_positive = n_nodes > 0 ? static_cast<double>(n_pos) / static_cast<double>(n_nodes) : 0.0;
    stats.mean_positive = n_pos > 0 ? sum_pos / static_cast<double>(n_pos)
                                    : std::numeric_limits<double>::quiet_NaN();
    stats.mean_negative = n_neg > 0 ? sum_neg / static_cast<double>(n_neg)
                                    : std::numeric_limits<double>::quiet_NaN();
    return stats;
}

/// Spec form over raw networks: computes the measure per window and averages.
inline AssortativityStats assortativity_statistics(const std::vector<DirectedNetwork>& networks,
                                                   Measure measure, Modality modality,
                                                   int quadrature_points = 21) {
    std::vector<std::optional<AssortativityResult>> results;
    for (const auto& net : networks) {
        try {
            results.emplace_back(compute_assortativity(net, measure, modality, quadrature_points));
        } catch (const DegenerateError&) {
            results.emplace_back(std::nullopt);
        }
    }
    return assortativity_statistics(results, measure, modality);
}

namespace detail {

struct ConfigKey {
    std::string measure;
    std::string variant;
    PortfolioObjective objective;
    PenaltyForm form;

    std::string str() const {
        return measure + "/" + variant + "/" + to_string(objective) + "/" + to_string(form);
    }
};

struct ConfigAccumulator {
    std::vector<double> oos_returns;
    std::vector<double> ins_returns;
    std::vector<double> achieved_R;
    Index solved = 0;
    Index fallback = 0;
};

inline std::vector<double> portfolio_daily_returns(const MatrixXd& returns, const VectorXd& x) {
    const VectorXd r = returns * x;
    return std::vector<double>(r.data(), r.data() + r.size());
}

inline nlohmann::json solution_record(const PortfolioSolution& sol, bool fallback,
                                      const std::vector<double>& oos) {
    nlohmann::json j = solution_to_json(sol);
    j["fallback"] = fallback;
    j["oos_returns"] = oos;
    return j;
}

} // namespace detail

/// Runs the full rolling-window experiment: per window fit the MTD network
/// in-sample, compute the local assortativity vector for every configured
/// (measure, variant), solve every (penalty form, objective) configuration,
/// hold the weights over the out-of-sample block, and aggregate.
/// Degenerate-assortativity windows fall back to the Markowitz solution for
/// that configuration and are counted in the diagnostics.
inline BacktestReport run_backtest(const PricePanel& prices, const BacktestConfig& config) {
    const ReturnPanel rets = log_returns(prices);
    const Index T = rets.returns.rows();
    const auto windows = rolling_windows(T, config.in_len, config.out_len, config.step);
    const Index n = rets.returns.cols();

    // variant list: the correlation benchmark first, then the modalities
    std::vector<std::string> variants;
    if (config.correlation_variant && config.source == NetworkSource::mtd)
        variants.push_back("correlation");
    for (Modality m : config.modalities) variants.push_back(to_string(m));

    std::map<std::string, detail::ConfigAccumulator> acc;
    std::map<std::string, std::vector<std::optional<AssortativityResult>>> stats_results;

    nlohmann::json win_json = nlohmann::json::array();

    for (std::size_t w = 0; w < windows.size(); ++w) {
        const WindowPair& win = windows[w];
        ReturnPanel insample;
        insample.tickers = rets.tickers;
        insample.dates.assign(rets.dates.begin() + win.in_start,
                              rets.dates.begin() + win.in_start + win.in_len);
        insample.returns = rets.returns.middleRows(win.in_start, win.in_len);
        const MatrixXd outsample = rets.returns.middleRows(win.out_start(), win.out_len);

        nlohmann::json wrec;
        wrec["window"] = w;
        wrec["in_start"] = win.in_start;

        // any degenerate fit is confined to this window: the configurations
        // that need the failed network fall back to the benchmark below
        std::optional<DirectedNetwork> net_mtd;
        try {
            const StatePanel states = discretize(insample, config.scheme, config.num_states);
            const TransitionTensor P = estimate_transition_matrices(states, config.smoothing);
            LambdaOptions lopts = config.lambda_opts;
            lopts.seed = derive_seed(config.seed, static_cast<std::uint64_t>(w));
            const LambdaMatrix lambda = estimate_lambda(states, P, lopts);
            std::vector<int> conv;
            for (bool c : lambda.converged) conv.push_back(c ? 1 : 0);
            wrec["lambda_converged"] = conv;
            net_mtd = from_lambda(lambda, rets.tickers);
        } catch (const DegenerateError& e) {
            wrec["mtd_error"] = e.what();
        }
        std::optional<DirectedNetwork> net_corr;
        if (config.source == NetworkSource::correlation || config.correlation_variant) {
            try {
                net_corr = from_correlation(insample);
            } catch (const DegenerateError& e) {
                wrec["correlation_error"] = e.what();
            }
        }
        const std::optional<DirectedNetwork>& net_main =
            config.source == NetworkSource::mtd ? net_mtd : net_corr;

        const MarketMoments moments = estimate_moments(insample.returns);

        // multiscale anchor weights are modality-independent; compute once per network
        std::optional<std::vector<VectorXd>> peel_main, peel_corr;
        const bool peel_wanted =
            std::find(config.measures.begin(), config.measures.end(), Measure::peel) !=
            config.measures.end();
        if (peel_wanted) {
            if (net_main) peel_main = multiscale_weights_all(*net_main, config.quadrature_points);
            if (net_corr && !variants.empty() && variants.front() == "correlation")
                peel_corr = multiscale_weights_all(*net_corr, config.quadrature_points);
        }

        if (net_mtd) {
            std::vector<double> lam;
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) lam.push_back(net_mtd->W(r, c));
            wrec["W_mtd"] = lam;
        }
        if (net_corr) {
            std::vector<double> cw;
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) cw.push_back(net_corr->W(r, c));
            wrec["W_correlation"] = cw;
        }

        // benchmark solutions per objective, shared by every fallback
        std::map<std::string, PortfolioSolution> benchmark;
        for (PortfolioObjective obj : config.objectives) {
            PortfolioSolution sol =
                markowitz_benchmark(moments, obj, config.delta, config.gamma, config.solve_opts);
            const auto oos = detail::portfolio_daily_returns(outsample, sol.x);
            const auto ins = detail::portfolio_daily_returns(insample.returns, sol.x);
            detail::ConfigKey key{"markowitz", "", obj, PenaltyForm::none};
            auto& a = acc[key.str()];
            a.oos_returns.insert(a.oos_returns.end(), oos.begin(), oos.end());
            a.ins_returns.insert(a.ins_returns.end(), ins.begin(), ins.end());
            ++a.solved;
            benchmark[to_string(obj)] = sol;
            wrec["solutions"][key.str()] = detail::solution_record(sol, false, oos);
        }

        for (Measure measure : config.measures) {
            for (const std::string& variant : variants) {
                const bool is_corr = variant == "correlation";
                const std::optional<DirectedNetwork>& net_opt = is_corr ? net_corr : net_main;
                // the correlation network is weight-symmetric, so its
                // modalities coincide; evaluate it in a fixed one
                const Modality mode = is_corr ? Modality{StrengthMode::out, StrengthMode::in}
                                              : modality_from_string(variant);

                std::optional<AssortativityResult> result;
                try {
                    if (!net_opt) {
                        result = std::nullopt;
                    } else if (measure == Measure::peel) {
                        const auto& weights = is_corr ? *peel_corr : *peel_main;
                        result = local_peel(*net_opt, mode, weights);
                    } else {
                        result = compute_assortativity(*net_opt, measure, mode,
                                                       config.quadrature_points);
                    }
                } catch (const DegenerateError&) {
                    result = std::nullopt;
                }

                if (!is_corr)
                    stats_results[to_string(measure) + "/" + variant].push_back(result);

                for (PenaltyForm form : config.forms)
                    for (PortfolioObjective obj : config.objectives) {
                        detail::ConfigKey key{to_string(measure), variant, obj, form};
                        auto& a = acc[key.str()];
                        PortfolioSolution sol;
                        bool fallback = false;
                        if (result) {
                            PenaltySpec spec{result->rho_local, form, config.scale};
                            sol = obj == PortfolioObjective::utility
                                      ? max_quadratic_utility(moments, spec, config.delta,
                                                              config.gamma, config.solve_opts)
                                      : max_sharpe(moments, spec, config.gamma, config.solve_opts);
                            a.achieved_R.push_back(sol.R);
                            ++a.solved;
                        } else {
                            sol = benchmark.at(to_string(obj));
                            fallback = true;
                            ++a.fallback;
                        }
                        const auto oos = detail::portfolio_daily_returns(outsample, sol.x);
                        const auto ins = detail::portfolio_daily_returns(insample.returns, sol.x);
                        a.oos_returns.insert(a.oos_returns.end(), oos.begin(), oos.end());
                        a.ins_returns.insert(a.ins_returns.end(), ins.begin(), ins.end());
                        wrec["solutions"][key.str()] = detail::solution_record(sol, fallback, oos);
                    }
            }
        }
        win_json.push_back(wrec);
    }

    BacktestReport report;
    report.windows["tickers"] = rets.tickers;
    report.windows["num_windows"] = windows.size();
    report.windows["seed"] = config.seed;
    report.windows["records"] = win_json;

    auto emit_row = [&](const detail::ConfigKey& key) {
        const auto& a = acc.at(key.str());
        ReportRow row;
        row.measure = key.measure;
        row.variant = key.variant;
        row.objective = key.objective;
        row.form = key.form;
        const auto [er, vol] = annualize(detail::mean_of(a.oos_returns),
                                         detail::sample_std(a.oos_returns));
        row.expected_return = er;
        row.annual_volatility = vol;
        row.sharpe_ratio = vol > 0.0 ? er / vol : std::numeric_limits<double>::quiet_NaN();
        const auto [ier, ivol] = annualize(detail::mean_of(a.ins_returns),
                                           detail::sample_std(a.ins_returns));
        row.is_expected_return = ier;
        row.is_annual_volatility = ivol;
        row.is_sharpe_ratio = ivol > 0.0 ? ier / ivol : std::numeric_limits<double>::quiet_NaN();
        if (!a.achieved_R.empty()) {
            row.mean_assortativity = detail::mean_of(a.achieved_R);
            row.has_assortativity = true;
        }
        row.windows_solved = a.solved;
        row.windows_fallback = a.fallback;
        report.rows.push_back(row);
    };

    for (PortfolioObjective obj : config.objectives)
        emit_row({"markowitz", "", obj, PenaltyForm::none});
    for (Measure measure : config.measures)
        for (const std::string& variant : variants)
            for (PenaltyForm form : config.forms)
                for (PortfolioObjective obj : config.objectives)
                    emit_row({to_string(measure), variant, obj, form});

    for (Measure measure : config.measures)
        for (Modality mode : config.modalities) {
            const auto it = stats_results.find(to_string(measure) + "/" + to_string(mode));
            if (it == stats_results.end()) continue;
            try {
                report.stats.push_back(assortativity_statistics(it->second, measure, mode));
            } catch (const DegenerateError&) {
                // every window degenerate for this pair: no statistics row
            }
        }

    return report;
}

inline void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out,
                             bool in_sample_table) {
    out << "measure,variant,objective,penalty_form,expected_return,annual_volatility,sharpe_ratio";
    if (in_sample_table) out << ",assortativity";
    out << "\n";
    for (const auto& row : rows) {
        const double er = in_sample_table ? row.is_expected_return : row.expected_return;
        const double vol = in_sample_table ? row.is_annual_volatility : row.annual_volatility;
        const double sr = in_sample_table ? row.is_sharpe_ratio : row.sharpe_ratio;
        out << row.measure << ',' << row.variant << ',' << to_string(row.objective) << ','
            << to_string(row.form) << ',' << format_g17(er) << ',' << format_g17(vol) << ',';
        if (std::isnan(sr))
            out << "";
        else
            out << format_g17(sr);
        if (in_sample_table) {
            out << ',';
            if (row.has_assortativity) out << format_g17(row.mean_assortativity);
        }
        out << "\n";
    }
}

inline void write_stats_csv(const std::vector<AssortativityStats>& stats, std::ostream& out) {
    out << "measure,modality,mean_rho_g,p_positive,mean_positive,mean_negative\n";
    for (const auto& s : stats) {
        out << to_string(s.measure) << ',' << to_string(s.modality) << ','
            << format_g17(s.mean_rho_g) << ',' << format_g17(s.p_positive) << ',';
        if (!std::isnan(s.mean_positive)) out << format_g17(s.mean_positive);
        out << ',';
        if (!std::isnan(s.mean_negative)) out << format_g17(s.mean_negative);
        out << "\n";
    }
}

} // namespace mtdnet
