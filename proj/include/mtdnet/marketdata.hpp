#pragma once

#include "mtdnet/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mtdnet {

/// Aligned panel of strictly positive daily closing prices, one column per
/// asset. Rows with missing or non-positive cells are dropped at load time.
struct PricePanel {
    std::vector<std::string> dates;   // strictly increasing, ISO-8601
    std::vector<std::string> tickers;
    MatrixXd prices;                  // T x n
    Index dropped_rows = 0;
};

/// Daily log returns r_t = ln(P_t / P_{t-1}); one row fewer than the prices.
struct ReturnPanel {
    std::vector<std::string> dates;   // date of the later price in each ratio
    std::vector<std::string> tickers;
    MatrixXd returns;                 // (T-1) x n
};

enum class StateScheme { sign, quantile };

/// Per-asset discretization rule. For the quantile scheme, edges(i, k) is the
/// k-th in-sample quantile edge of asset i; a return r maps to the number of
/// edges strictly below it.
struct DiscretizationScheme {
    StateScheme kind = StateScheme::sign;
    int num_states = 3;
    MatrixXd edges;                   // n x (z-1); empty for the sign scheme
};

/// Categorical state sequences on the shared calendar, values in [0, z).
struct StatePanel {
    std::vector<std::string> dates;
    std::vector<std::string> tickers;
    MatrixXi states;
    int num_states = 0;
    DiscretizationScheme scheme;
};

/// Contiguous in-sample range followed immediately by its out-of-sample range.
struct WindowPair {
    Index in_start = 0;
    Index in_len = 0;
    Index out_len = 0;

    Index out_start() const { return in_start + in_len; }
    Index end() const { return in_start + in_len + out_len; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Loads a closing-price CSV with header `date,TICKER1,TICKER2,...`.
/// Rows containing any missing, unparsable, or non-positive price are dropped
/// and counted in `dropped_rows`. Throws InputError on unreadable files,
/// zero asset columns, fewer than 2 retained rows, or non-increasing dates.
inline PricePanel load_prices(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open price file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw InputError("empty price file: " + path);
    auto cols = detail::split_csv_line(header);
    if (cols.size() < 2) throw InputError("price file needs a date column and at least one asset: " + path);

    PricePanel panel;
    for (std::size_t c = 1; c < cols.size(); ++c) {
        std::string t = detail::strip(cols[c]);
        if (t.empty()) throw InputError("empty ticker name in header of " + path);
        panel.tickers.push_back(t);
    }
    const std::size_t n = panel.tickers.size();

    std::vector<std::string> dates;
    std::vector<double> values; // row-major staging
    std::string line;
    while (std::getline(in, line)) {
        if (detail::strip(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != n + 1) {
            ++panel.dropped_rows;
            continue;
        }
        std::vector<double> row(n);
        bool ok = true;
        for (std::size_t c = 0; c < n; ++c) {
            const std::string cell = detail::strip(cells[c + 1]);
            if (cell.empty()) { ok = false; break; }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v) || v <= 0.0) {
                ok = false;
                break;
            }
            row[c] = v;
        }
        if (!ok) {
            ++panel.dropped_rows;
            continue;
        }
        dates.push_back(detail::strip(cells[0]));
        values.insert(values.end(), row.begin(), row.end());
    }

    const Index T = static_cast<Index>(dates.size());
    if (T < 2) throw InputError("fewer than 2 usable price rows in " + path);
    for (Index t = 1; t < T; ++t) {
        if (!(dates[static_cast<std::size_t>(t - 1)] < dates[static_cast<std::size_t>(t)]))
            throw InputError("dates not strictly increasing at row " + dates[static_cast<std::size_t>(t)]);
    }

    panel.dates = std::move(dates);
    panel.prices.resize(T, static_cast<Index>(n));
    for (Index t = 0; t < T; ++t)
        for (Index c = 0; c < static_cast<Index>(n); ++c)
            panel.prices(t, c) = values[static_cast<std::size_t>(t) * n + static_cast<std::size_t>(c)];
    return panel;
}

/// r_{i,t} = ln(P_{i,t} / P_{i,t-1}).
inline ReturnPanel log_returns(const PricePanel& panel) {
    const Index T = panel.prices.rows();
    if (T < 2) throw InputError("log_returns needs at least 2 price rows");
    ReturnPanel out;
    out.tickers = panel.tickers;
    out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
    out.returns = (panel.prices.bottomRows(T - 1).array() / panel.prices.topRows(T - 1).array()).log();
    return out;
}

/// Fits the sign scheme (negative / null / positive -> 0 / 1 / 2) or the
/// per-asset equal-mass quantile scheme on this panel and applies it.
inline StatePanel discretize(const ReturnPanel& panel, StateScheme kind, int num_states = 3) {
    const Index T = panel.returns.rows();
    const Index n = panel.returns.cols();
    if (T < 1) throw InputError("discretize needs a non-empty return panel");

    StatePanel out;
    out.dates = panel.dates;
    out.tickers = panel.tickers;
    out.states.resize(T, n);
    out.scheme.kind = kind;

    if (kind == StateScheme::sign) {
        out.num_states = 3;
        out.scheme.num_states = 3;
        for (Index t = 0; t < T; ++t)
            for (Index i = 0; i < n; ++i) {
                const double r = panel.returns(t, i);
                out.states(t, i) = r < 0.0 ? 0 : (r > 0.0 ? 2 : 1);
            }
        return out;
    }

    if (num_states < 2) throw InputError("quantile scheme needs num_states >= 2");
    const int z = num_states;
    out.num_states = z;
    out.scheme.num_states = z;
    out.scheme.edges.resize(n, z - 1);
    for (Index i = 0; i < n; ++i) {
        std::vector<double> sorted(static_cast<std::size_t>(T));
        for (Index t = 0; t < T; ++t) sorted[static_cast<std::size_t>(t)] = panel.returns(t, i);
        std::sort(sorted.begin(), sorted.end());
        if (sorted.front() == sorted.back())
            throw DegenerateError("asset " + panel.tickers[static_cast<std::size_t>(i)] +
                                  " has identical returns; quantile scheme undefined");
        for (int k = 1; k < z; ++k) {
            // edge at the ceil(k*T/z)-th order statistic; states count edges below
            const Index idx = (static_cast<Index>(k) * T + z - 1) / z - 1;
            out.scheme.edges(i, k - 1) = sorted[static_cast<std::size_t>(std::clamp<Index>(idx, 0, T - 1))];
        }
        for (Index t = 0; t < T; ++t) {
            const double r = panel.returns(t, i);
            int s = 0;
            for (int k = 0; k < z - 1; ++k)
                if (r > out.scheme.edges(i, k)) ++s;
            out.states(t, i) = s;
        }
    }
    return out;
}

/// Rolling windows at offsets 0, step, 2*step, ...; a window is emitted iff
/// both its in-sample and out-of-sample ranges fit inside T rows.
inline std::vector<WindowPair> rolling_windows(Index T, Index in_len, Index out_len, Index step) {
    if (in_len < 1 || out_len < 1 || step < 1)
        throw InputError("rolling_windows: lengths and step must be positive");
    if (T < in_len + out_len)
        throw InputError("rolling_windows: panel too short for one window");
    std::vector<WindowPair> out;
    for (Index start = 0; start + in_len + out_len <= T; start += step)
        out.push_back(WindowPair{start, in_len, out_len});
    return out;
}

} // namespace mtdnet
