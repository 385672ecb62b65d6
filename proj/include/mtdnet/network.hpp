#pragma once

#include "mtdnet/common.hpp"
#include "mtdnet/marketdata.hpp"
#include "mtdnet/mtd.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace mtdnet {

/// Directed weighted graph with zero diagonal and cached degree/strength
/// vectors. Immutable after construction.
struct DirectedNetwork {
    Index n = 0;
    std::vector<std::string> tickers;
    MatrixXd W;        // nonnegative weights, zero diagonal
    MatrixXi A;        // a_ij = 1 iff w_ij > 0
    VectorXd s_in;     // column sums of W
    VectorXd s_out;    // row sums of W
    VectorXi d_in;
    VectorXi d_out;
    double omega = 0.0;

    bool has_edge(Index i, Index j) const { return i != j && W(i, j) > 0.0; }
};

enum class NodeEnd { source, target };
enum class StrengthMode { in, out };

inline std::string to_string(StrengthMode m) { return m == StrengthMode::in ? "in" : "out"; }

/// Builds the caches from a weight matrix whose diagonal is zeroed here.
inline DirectedNetwork make_network(MatrixXd W, std::vector<std::string> tickers) {
    const Index n = W.rows();
    if (W.cols() != n) throw InputError("network weight matrix must be square");
    if (static_cast<Index>(tickers.size()) != n) throw InputError("ticker count does not match matrix size");
    W.diagonal().setZero();
    if ((W.array() < 0.0).any()) throw InputError("network weights must be nonnegative");

    DirectedNetwork net;
    net.n = n;
    net.tickers = std::move(tickers);
    net.W = std::move(W);
    net.A = (net.W.array() > 0.0).cast<int>();
    net.s_in = net.W.colwise().sum();
    net.s_out = net.W.rowwise().sum();
    net.d_in = net.A.colwise().sum();
    net.d_out = net.A.rowwise().sum();
    net.omega = net.W.sum();
    return net;
}

/// Network induced by a fitted mixing matrix: w_ij = lambda_ij off the diagonal.
inline DirectedNetwork from_lambda(const LambdaMatrix& lambda, std::vector<std::string> tickers) {
    return make_network(lambda.lambda, std::move(tickers));
}

inline DirectedNetwork from_lambda(const MtdModel& model) {
    return from_lambda(model.lambda, model.tickers);
}

/// Benchmark network: w_ij = |pearson(r_i, r_j)|, zero diagonal. Symmetric by
/// construction. Throws on zero-variance assets.
inline DirectedNetwork from_correlation(const ReturnPanel& returns) {
    const Index T = returns.returns.rows();
    const Index n = returns.returns.cols();
    if (T < 3) throw InputError("correlation network needs at least 3 return rows");

    const MatrixXd centered = returns.returns.rowwise() - returns.returns.colwise().mean();
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(T - 1);
    for (Index i = 0; i < n; ++i)
        if (cov(i, i) <= 0.0)
            throw DegenerateError("asset " + returns.tickers[static_cast<std::size_t>(i)] +
                                  " has zero return variance");

    MatrixXd W(n, n);
    for (Index i = 0; i < n; ++i) {
        W(i, i) = 0.0;
        for (Index j = i + 1; j < n; ++j) {
            const double rho = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
            W(i, j) = W(j, i) = std::abs(rho);
        }
    }
    return make_network(std::move(W), returns.tickers);
}

/// Excess strength of one end of an existing edge (i, j): the node's in- or
/// out-strength minus the weight of this edge in the matching direction
/// (the reciprocal edge's weight for the opposite direction, 0 when absent).
inline double excess_strength(const DirectedNetwork& net, Index i, Index j,
                              NodeEnd end, StrengthMode mode) {
    if (!net.has_edge(i, j)) throw InputError("excess_strength: edge does not exist");
    if (end == NodeEnd::source)
        return mode == StrengthMode::out ? net.s_out[i] - net.W(i, j)
                                         : net.s_in[i] - net.W(j, i);
    return mode == StrengthMode::in ? net.s_in[j] - net.W(i, j)
                                    : net.s_out[j] - net.W(j, i);
}

inline void write_edge_csv(const DirectedNetwork& net, std::ostream& out) {
    out << "source,target,weight\n";
    for (Index i = 0; i < net.n; ++i)
        for (Index j = 0; j < net.n; ++j)
            if (net.has_edge(i, j))
                out << net.tickers[static_cast<std::size_t>(i)] << ','
                    << net.tickers[static_cast<std::size_t>(j)] << ','
                    << format_g17(net.W(i, j)) << '\n';
}

inline nlohmann::json network_to_json(const DirectedNetwork& net) {
    nlohmann::json j;
    j["tickers"] = net.tickers;
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(net.n * net.n));
    for (Index r = 0; r < net.n; ++r)
        for (Index c = 0; c < net.n; ++c) w.push_back(net.W(r, c));
    j["W"] = w;
    return j;
}

inline DirectedNetwork network_from_json(const nlohmann::json& j) {
    auto tickers = j.at("tickers").get<std::vector<std::string>>();
    const Index n = static_cast<Index>(tickers.size());
    const auto w = j.at("W").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(n * n))
        throw InputError("network JSON: W size mismatch");
    MatrixXd W(n, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) W(r, c) = w[static_cast<std::size_t>(r * n + c)];
    return make_network(std::move(W), std::move(tickers));
}

inline void write_network(const DirectedNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write network file: " + path);
    out << network_to_json(net).dump(2) << "\n";
}

inline DirectedNetwork read_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open network file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed network JSON in " + path + ": " + e.what());
    }
    return network_from_json(j);
}

} // namespace mtdnet
