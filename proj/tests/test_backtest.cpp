#include "mtdnet/backtest.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace mtdnet;

namespace {

/// Geometric price panel driven by a caller-supplied daily return generator.
PricePanel synthetic_prices(Index days, Index assets, std::uint64_t seed,
                            const std::function<VectorXd(std::mt19937_64&)>& gen) {
    std::mt19937_64 rng(seed);
    PricePanel p;
    p.prices.resize(days, assets);
    for (Index i = 0; i < assets; ++i) p.tickers.push_back("A" + std::to_string(i));
    for (Index t = 0; t < days; ++t) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "d%05d", static_cast<int>(t));
        p.dates.push_back(buf);
        if (t == 0) {
            p.prices.row(0).setConstant(100.0);
        } else {
            const VectorXd r = gen(rng);
            for (Index i = 0; i < assets; ++i)
                p.prices(t, i) = p.prices(t - 1, i) * std::exp(r[i]);
        }
    }
    return p;
}

VectorXd iid_returns(std::mt19937_64& rng, Index n, double mean, double vol) {
    VectorXd r(n);
    for (Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (int k = 0; k < 12; ++k) s += uniform01(rng);
        r[i] = mean + vol * (s - 6.0);
    }
    return r;
}

BacktestConfig small_config() {
    BacktestConfig config;
    config.measures = {Measure::piraveenan, Measure::sabek};
    config.lambda_opts.restarts = 1;
    config.lambda_opts.max_iters = 500;
    return config;
}

} // namespace

TEST_CASE("annualization") {
    CHECK(annualize(0.0, 0.0).first == 0.0);
    const auto [er, vol] = annualize(0.001, 0.01);
    CHECK_THAT(er, Catch::Matchers::WithinAbs(0.252, 1e-15));
    CHECK_THAT(vol, Catch::Matchers::WithinAbs(0.15874507866387544, 1e-15));
    // round trip back to daily
    CHECK_THAT(er / 252.0, Catch::Matchers::WithinULP(0.001, 1));
    CHECK_THAT(vol / std::sqrt(252.0), Catch::Matchers::WithinULP(0.01, 1));
}

TEST_CASE("assortativity statistics rows") {
    AssortativityResult a;
    a.measure = Measure::sabek;
    a.rho_g = 0.3;
    a.rho_local = VectorXd(4);
    a.rho_local << 0.1, 0.2, 0.05, 0.15;

    SECTION("all-positive locals leave the negative mean undefined") {
        const auto stats = assortativity_statistics({std::optional<AssortativityResult>(a)},
                                                    Measure::sabek, all_modalities()[0]);
        CHECK(stats.p_positive == 1.0);
        CHECK(std::isnan(stats.mean_negative));
        CHECK_THAT(stats.mean_positive, Catch::Matchers::WithinAbs(0.125, 1e-15));
    }
    SECTION("hand-computed single window") {
        AssortativityResult b = a;
        b.rho_g = -0.1;
        b.rho_local << 0.2, -0.4, 0.0, 0.6;
        const auto stats = assortativity_statistics({std::optional<AssortativityResult>(b)},
                                                    Measure::sabek, all_modalities()[0]);
        CHECK_THAT(stats.mean_rho_g, Catch::Matchers::WithinAbs(-0.1, 1e-15));
        CHECK_THAT(stats.p_positive, Catch::Matchers::WithinAbs(0.5, 1e-15));
        CHECK_THAT(stats.mean_positive, Catch::Matchers::WithinAbs(0.4, 1e-15));
        CHECK_THAT(stats.mean_negative, Catch::Matchers::WithinAbs(-0.4, 1e-15));
    }
    SECTION("averaging identical windows is idempotent") {
        const std::vector<std::optional<AssortativityResult>> two{a, a};
        const auto one_stat = assortativity_statistics({std::optional<AssortativityResult>(a)},
                                                       Measure::sabek, all_modalities()[0]);
        const auto two_stat = assortativity_statistics(two, Measure::sabek, all_modalities()[0]);
        CHECK(two_stat.mean_rho_g == one_stat.mean_rho_g);
        CHECK(two_stat.p_positive == one_stat.p_positive);
        CHECK(two_stat.mean_positive == one_stat.mean_positive);
    }
    SECTION("all-degenerate input is an error") {
        const std::vector<std::optional<AssortativityResult>> empty{std::nullopt, std::nullopt};
        CHECK_THROWS_AS(assortativity_statistics(empty, Measure::sabek, all_modalities()[0]),
                        DegenerateError);
    }
}

TEST_CASE("a 151-day panel yields two windows of records") {
    const PricePanel prices = synthetic_prices(151, 3, 77, [](std::mt19937_64& rng) {
        return iid_returns(rng, 3, 0.0005, 0.01);
    });
    BacktestConfig config = small_config();
    const BacktestReport report = run_backtest(prices, config);
    CHECK(report.windows.at("num_windows").get<int>() == 2);
    CHECK(report.windows.at("records").size() == 2);
    for (const auto& row : report.rows)
        CHECK(row.windows_solved + row.windows_fallback == 2);
}

TEST_CASE("zero penalty scale collapses every row onto the benchmark") {
    const PricePanel prices = synthetic_prices(151, 3, 99, [](std::mt19937_64& rng) {
        return iid_returns(rng, 3, 0.0002, 0.012);
    });
    BacktestConfig config = small_config();
    config.scale = 0.0;
    const BacktestReport report = run_backtest(prices, config);

    std::map<std::string, ReportRow> bench;
    for (const auto& row : report.rows)
        if (row.measure == "markowitz") bench[to_string(row.objective)] = row;
    REQUIRE(bench.size() == 2);
    for (const auto& row : report.rows) {
        const auto& b = bench.at(to_string(row.objective));
        CHECK(row.expected_return == b.expected_return);
        CHECK(row.annual_volatility == b.annual_volatility);
    }
}

TEST_CASE("reports are deterministic given the seed") {
    const PricePanel prices = synthetic_prices(151, 3, 1234, [](std::mt19937_64& rng) {
        return iid_returns(rng, 3, 0.0, 0.01);
    });
    BacktestConfig config = small_config();
    config.seed = 42;
    const BacktestReport a = run_backtest(prices, config);
    const BacktestReport b = run_backtest(prices, config);

    std::ostringstream ca, cb, ja, jb;
    write_report_csv(a.rows, ca, false);
    write_report_csv(b.rows, cb, false);
    ja << a.windows.dump(2);
    jb << b.windows.dump(2);
    CHECK(ca.str() == cb.str());
    CHECK(ja.str() == jb.str());
}

TEST_CASE("two-asset networks degenerate and fall back to the benchmark") {
    // with two nodes every edge's excess strength is forced, so assortativity
    // is degenerate in every window
    const PricePanel prices = synthetic_prices(151, 2, 5, [](std::mt19937_64& rng) {
        return iid_returns(rng, 2, 0.0004, 0.01);
    });
    BacktestConfig config = small_config();
    config.correlation_variant = false;
    const BacktestReport report = run_backtest(prices, config);
    for (const auto& row : report.rows) {
        if (row.measure == "markowitz") continue;
        CHECK(row.windows_fallback == 2);
        CHECK(row.windows_solved == 0);
        CHECK_FALSE(row.has_assortativity);
    }
    CHECK(report.stats.empty());
}

TEST_CASE("a window with a constant asset degrades to fallback instead of aborting") {
    // asset 2 is frozen over the first window's in-sample span, so the
    // correlation network is degenerate there and only there
    PricePanel prices = synthetic_prices(151, 3, 55, [](std::mt19937_64& rng) {
        return iid_returns(rng, 3, 0.0004, 0.012);
    });
    for (Index t = 0; t <= 95; ++t) prices.prices(t, 2) = 100.0;

    BacktestConfig config = small_config();
    const BacktestReport report = run_backtest(prices, config);
    CHECK(report.windows.at("records")[0].contains("correlation_error"));
    CHECK_FALSE(report.windows.at("records")[1].contains("correlation_error"));
    for (const auto& row : report.rows) {
        CHECK(row.windows_solved + row.windows_fallback == 2);
        if (row.variant == "correlation") CHECK(row.windows_fallback >= 1);
    }
}

TEST_CASE("realized markowitz volatility tracks the generating covariance") {
    const Index n = 5;
    MatrixXd cov(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            cov(i, j) = (i == j ? 1.0 : 0.3) * 0.012 * 0.012;
    const MatrixXd L = Eigen::LLT<MatrixXd>(cov).matrixL();

    const PricePanel prices = synthetic_prices(481, n, 31337, [&](std::mt19937_64& rng) {
        VectorXd z(n);
        for (Index i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < 12; ++k) s += uniform01(rng);
            z[i] = s - 6.0;
        }
        return (VectorXd::Constant(n, 0.0008) + L * z).eval();
    });

    BacktestConfig config;
    config.measures = {};
    config.correlation_variant = false;
    config.objectives = {PortfolioObjective::utility};
    config.delta = 50.0; // risk-dominant utility keeps the weights stable across windows
    const BacktestReport report = run_backtest(prices, config);
    REQUIRE(report.rows.size() == 1);
    const ReportRow& bench = report.rows.front();

    // average weights over windows from the per-window records
    VectorXd avg = VectorXd::Zero(n);
    const auto& records = report.windows.at("records");
    for (const auto& rec : records) {
        const auto x = rec.at("solutions").at("markowitz//utility/none").at("x").get<std::vector<double>>();
        avg += Eigen::Map<const VectorXd>(x.data(), n);
    }
    avg /= static_cast<double>(records.size());
    const double analytic = std::sqrt(252.0 * avg.dot(cov * avg));
    CHECK(std::abs(bench.annual_volatility - analytic) <= 0.2 * analytic);
}

TEST_CASE("large universes run through the heuristic solver path") {
    const Index n = 32; // above the exact-solver cutoff
    const PricePanel prices = synthetic_prices(151, n, 808, [n](std::mt19937_64& rng) {
        return iid_returns(rng, n, 0.0003, 0.015);
    });
    BacktestConfig config;
    config.measures = {Measure::piraveenan};
    config.correlation_variant = false;
    config.forms = {PenaltyForm::weighted};
    config.objectives = {PortfolioObjective::utility};
    config.lambda_opts.restarts = 1;
    config.lambda_opts.max_iters = 300;
    const BacktestReport report = run_backtest(prices, config);
    bool saw_heuristic = false;
    for (const auto& rec : report.windows.at("records"))
        for (const auto& [key, sol] : rec.at("solutions").items()) {
            const auto x = sol.at("x").get<std::vector<double>>();
            double sum = 0.0;
            for (double v : x) sum += v;
            CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
            if (sol.at("status").get<std::string>() == "heuristic") saw_heuristic = true;
        }
    CHECK(saw_heuristic);
}

TEST_CASE("report CSV schema") {
    const PricePanel prices = synthetic_prices(151, 3, 2020, [](std::mt19937_64& rng) {
        return iid_returns(rng, 3, 0.0003, 0.011);
    });
    BacktestConfig config = small_config();
    config.objectives = {PortfolioObjective::utility};
    const BacktestReport report = run_backtest(prices, config);

    std::ostringstream oos, ins;
    write_report_csv(report.rows, oos, false);
    write_report_csv(report.rows, ins, true);
    CHECK(oos.str().rfind("measure,variant,objective,penalty_form,expected_return,"
                          "annual_volatility,sharpe_ratio\n", 0) == 0);
    CHECK(ins.str().rfind("measure,variant,objective,penalty_form,expected_return,"
                          "annual_volatility,sharpe_ratio,assortativity\n", 0) == 0);
    CHECK(oos.str().find(",sharpe,") == std::string::npos); // utility-only run

    // 2 measures x (corr + 4 modalities) x 2 forms x 1 objective + 1 benchmark
    std::size_t lines = 0;
    for (char c : oos.str())
        if (c == '\n') ++lines;
    CHECK(lines == 1 + 1 + 2 * 5 * 2);
    CHECK(report.windows.at("records").size() == 2);

    // every stats row belongs to a configured (measure, modality) pair
    for (const auto& s : report.stats) {
        CHECK((s.measure == Measure::piraveenan || s.measure == Measure::sabek));
        CHECK(s.windows_used >= 1);
    }
}
