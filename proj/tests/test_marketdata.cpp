#include "mtdnet/marketdata.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mtdnet;

namespace {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("mtdnet_md_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".csv");
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::filesystem::remove(path); }
};

} // namespace

TEST_CASE("load_prices parses an aligned two-asset panel") {
    TempFile f("date,AAA,BBB\n2020-01-01,100,50\n2020-01-02,105,51\n2020-01-03,110,52\n");
    const PricePanel p = load_prices(f.path.string());
    REQUIRE(p.prices.rows() == 3);
    REQUIRE(p.prices.cols() == 2);
    CHECK(p.tickers == std::vector<std::string>{"AAA", "BBB"});
    CHECK(p.prices(0, 0) == 100.0);
    CHECK(p.prices(2, 1) == 52.0);
    CHECK(p.dropped_rows == 0);
}

TEST_CASE("load_prices drops rows with missing or non-positive cells") {
    SECTION("missing cell") {
        TempFile f("date,AAA,BBB\n2020-01-01,100,50\n2020-01-02,,51\n2020-01-03,110,52\n");
        const PricePanel p = load_prices(f.path.string());
        CHECK(p.prices.rows() == 2);
        CHECK(p.dropped_rows == 1);
    }
    SECTION("zero price") {
        TempFile f("date,AAA,BBB\n2020-01-01,100,50\n2020-01-02,0,51\n2020-01-03,110,52\n");
        const PricePanel p = load_prices(f.path.string());
        CHECK(p.prices.rows() == 2);
        CHECK(p.dates == std::vector<std::string>{"2020-01-01", "2020-01-03"});
    }
}

TEST_CASE("load_prices error paths") {
    CHECK_THROWS_AS(load_prices("/nonexistent/prices.csv"), InputError);
    TempFile no_assets("date\n2020-01-01\n");
    CHECK_THROWS_AS(load_prices(no_assets.path.string()), InputError);
    TempFile one_row("date,AAA\n2020-01-01,100\n");
    CHECK_THROWS_AS(load_prices(one_row.path.string()), InputError);
    TempFile bad_dates("date,AAA\n2020-01-02,100\n2020-01-01,101\n");
    CHECK_THROWS_AS(load_prices(bad_dates.path.string()), InputError);
}

TEST_CASE("log_returns formula values") {
    PricePanel p;
    p.tickers = {"AAA"};
    p.dates = {"d1", "d2", "d3"};
    p.prices.resize(3, 1);
    p.prices << 100.0, 105.0, 52.5;
    const ReturnPanel r = log_returns(p);
    REQUIRE(r.returns.rows() == 2);
    CHECK_THAT(r.returns(0, 0), Catch::Matchers::WithinAbs(0.04879016417, 1e-9));
    CHECK_THAT(r.returns(1, 0), Catch::Matchers::WithinAbs(-0.69314718056, 1e-9));
}

TEST_CASE("log_returns of a constant series is zero") {
    PricePanel p;
    p.tickers = {"AAA"};
    p.dates = {"d1", "d2", "d3", "d4"};
    p.prices = MatrixXd::Constant(4, 1, 42.0);
    const ReturnPanel r = log_returns(p);
    CHECK(r.returns.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("price round-trip through cumulative log returns") {
    std::mt19937_64 rng(7);
    PricePanel p;
    p.tickers = {"A", "B", "C"};
    p.prices.resize(40, 3);
    for (Index t = 0; t < 40; ++t) {
        p.dates.push_back("d" + std::to_string(100 + t));
        for (Index i = 0; i < 3; ++i)
            p.prices(t, i) = t == 0 ? 50.0 + 10.0 * static_cast<double>(i)
                                    : p.prices(t - 1, i) * std::exp(0.1 * (uniform01(rng) - 0.5));
    }
    const ReturnPanel r = log_returns(p);
    for (Index i = 0; i < 3; ++i) {
        double cum = 0.0;
        for (Index t = 0; t < r.returns.rows(); ++t) {
            cum += r.returns(t, i);
            const double rebuilt = p.prices(0, i) * std::exp(cum);
            CHECK_THAT(rebuilt, Catch::Matchers::WithinRel(p.prices(t + 1, i), 1e-12));
        }
    }
}

TEST_CASE("sign discretization maps return signs to states") {
    ReturnPanel r;
    r.tickers = {"A"};
    r.dates = {"d1", "d2", "d3"};
    r.returns.resize(3, 1);
    r.returns << -0.01, 0.0, 0.02;
    const StatePanel s = discretize(r, StateScheme::sign);
    CHECK(s.num_states == 3);
    CHECK(s.states(0, 0) == 0);
    CHECK(s.states(1, 0) == 1);
    CHECK(s.states(2, 0) == 2);
}

TEST_CASE("all-zero returns land in the null state") {
    ReturnPanel r;
    r.tickers = {"A"};
    r.dates = {"d1", "d2"};
    r.returns = MatrixXd::Zero(2, 1);
    const StatePanel s = discretize(r, StateScheme::sign);
    CHECK((s.states.array() == 1).all());
}

TEST_CASE("sign state counts match a direct scan of return signs") {
    std::mt19937_64 rng(11);
    ReturnPanel r;
    r.tickers = {"A", "B"};
    r.returns.resize(200, 2);
    for (Index t = 0; t < 200; ++t) {
        r.dates.push_back("d" + std::to_string(t));
        for (Index i = 0; i < 2; ++i) {
            const double u = uniform01(rng);
            r.returns(t, i) = u < 0.1 ? 0.0 : (u - 0.55);
        }
    }
    const StatePanel s = discretize(r, StateScheme::sign);
    for (Index i = 0; i < 2; ++i) {
        Index neg = 0, nul = 0, pos = 0;
        for (Index t = 0; t < 200; ++t) {
            if (r.returns(t, i) < 0.0) ++neg;
            else if (r.returns(t, i) == 0.0) ++nul;
            else ++pos;
        }
        CHECK((s.states.col(i).array() == 0).count() == neg);
        CHECK((s.states.col(i).array() == 1).count() == nul);
        CHECK((s.states.col(i).array() == 2).count() == pos);
    }
}

TEST_CASE("quantile(4) on 1..100 gives equal-mass bins") {
    ReturnPanel r;
    r.tickers = {"A"};
    r.returns.resize(100, 1);
    for (Index t = 0; t < 100; ++t) {
        r.dates.push_back("d" + std::to_string(t));
        r.returns(t, 0) = static_cast<double>(t + 1);
    }
    const StatePanel s = discretize(r, StateScheme::quantile, 4);

    // independent oracle: sort values and count how many land in each quarter
    std::vector<double> sorted(r.returns.data(), r.returns.data() + 100);
    std::sort(sorted.begin(), sorted.end());
    for (int bin = 0; bin < 4; ++bin) {
        const Index count = (s.states.col(0).array() == bin).count();
        CHECK(count == 25);
    }
    // edges are stored in the descriptor
    REQUIRE(s.scheme.edges.cols() == 3);
    CHECK(s.scheme.edges(0, 0) == 25.0);
    CHECK(s.scheme.edges(0, 1) == 50.0);
    CHECK(s.scheme.edges(0, 2) == 75.0);
}

TEST_CASE("quantile scheme rejects a degenerate asset") {
    ReturnPanel r;
    r.tickers = {"A"};
    r.dates = {"d1", "d2", "d3"};
    r.returns = MatrixXd::Constant(3, 1, 0.01);
    CHECK_THROWS_AS(discretize(r, StateScheme::quantile, 2), DegenerateError);
}

TEST_CASE("rolling window counts") {
    SECTION("150 days, two windows") {
        const auto w = rolling_windows(150, 90, 30, 30);
        REQUIRE(w.size() == 2);
        CHECK(w[0].in_start == 0);
        CHECK(w[1].in_start == 30);
    }
    SECTION("120 days, one window") {
        CHECK(rolling_windows(120, 90, 30, 30).size() == 1);
    }
    SECTION("5100 days match the independent count formula") {
        const auto w = rolling_windows(5100, 90, 30, 30);
        const Index expected = (5100 - 90 - 30) / 30 + 1; // floor division
        CHECK(static_cast<Index>(w.size()) == expected);
        CHECK(w.size() == 167);
    }
    SECTION("too short") {
        CHECK_THROWS_AS(rolling_windows(100, 90, 30, 30), InputError);
    }
}

TEST_CASE("rolling windows partition cleanly when step equals out length") {
    const auto windows = rolling_windows(371, 60, 17, 17);
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& w = windows[k];
        CHECK(w.out_start() == w.in_start + w.in_len);   // no overlap
        CHECK(w.end() <= 371);
        if (k > 0) CHECK(w.out_start() == windows[k - 1].end()); // contiguous out-samples
    }
}
