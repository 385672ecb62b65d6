// Shared test utilities: independent oracles and random-instance generators.
// Everything here is deliberately written with plain loops, separate from the
// library's computation paths.
#pragma once

#include "mtdnet/assortativity.hpp"
#include "mtdnet/network.hpp"
#include "mtdnet/portfolio.hpp"

#include <Eigen/Dense>

#include <random>
#include <tuple>
#include <vector>

namespace testsupport {

using mtdnet::DirectedNetwork;
using mtdnet::Index;
using mtdnet::MatrixXd;
using mtdnet::Modality;
using mtdnet::StrengthMode;
using mtdnet::VectorXd;

/// Generic weighted Pearson correlation, two-pass centered form.
inline double weighted_pearson(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::vector<double>& ws) {
    double wsum = 0.0;
    for (double w : ws) wsum += w;
    double mx = 0.0, my = 0.0;
    for (std::size_t e = 0; e < ws.size(); ++e) {
        mx += ws[e] * xs[e];
        my += ws[e] * ys[e];
    }
    mx /= wsum;
    my /= wsum;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t e = 0; e < ws.size(); ++e) {
        cov += ws[e] * (xs[e] - mx) * (ys[e] - my);
        vx += ws[e] * (xs[e] - mx) * (xs[e] - mx);
        vy += ws[e] * (ys[e] - my) * (ys[e] - my);
    }
    return cov / std::sqrt(vx * vy);
}

/// Edge table (es_source, es_target, w) built directly from the weight
/// matrix with hand-rolled strength sums.
inline std::tuple<std::vector<double>, std::vector<double>, std::vector<double>>
edge_table(const MatrixXd& W, Modality mode) {
    const Index n = W.rows();
    std::vector<double> sin(static_cast<std::size_t>(n), 0.0), sout(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            sout[static_cast<std::size_t>(i)] += W(i, j);
            sin[static_cast<std::size_t>(j)] += W(i, j);
        }
    std::vector<double> xs, ys, ws;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (i == j || W(i, j) <= 0.0) continue;
            const double x = mode.source == StrengthMode::out
                                 ? sout[static_cast<std::size_t>(i)] - W(i, j)
                                 : sin[static_cast<std::size_t>(i)] - W(j, i);
            const double y = mode.target == StrengthMode::in
                                 ? sin[static_cast<std::size_t>(j)] - W(i, j)
                                 : sout[static_cast<std::size_t>(j)] - W(j, i);
            xs.push_back(x);
            ys.push_back(y);
            ws.push_back(W(i, j));
        }
    return {xs, ys, ws};
}

/// Personalized PageRank by a dense direct linear solve (alpha < 1):
/// pi' (I - alpha Q) = (1 - alpha) e_l', dangling rows restart to the anchor.
inline VectorXd ppr_dense_solve(const DirectedNetwork& net, Index l, double alpha) {
    const Index n = net.n;
    MatrixXd Q = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        if (net.s_out[i] > 0.0)
            for (Index j = 0; j < n; ++j) Q(i, j) = net.W(i, j) / net.s_out[i];
        else
            Q(i, l) = 1.0;
    }
    const MatrixXd A = MatrixXd::Identity(n, n) - alpha * Q.transpose();
    VectorXd b = VectorXd::Zero(n);
    b[l] = 1.0 - alpha;
    return A.partialPivLu().solve(b);
}

/// Random directed weighted graph with weights in [0.1, 1.0).
inline DirectedNetwork random_graph(Index n, std::mt19937_64& rng, double density = 0.5) {
    MatrixXd W = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (i == j) continue;
            if (mtdnet::uniform01(rng) < density) W(i, j) = 0.1 + 0.9 * mtdnet::uniform01(rng);
        }
    std::vector<std::string> tickers;
    for (Index i = 0; i < n; ++i) tickers.push_back("N" + std::to_string(i));
    return mtdnet::make_network(std::move(W), std::move(tickers));
}

/// Regenerates until the graph is non-degenerate in all four modalities.
inline DirectedNetwork random_nondegenerate_graph(Index n, std::mt19937_64& rng,
                                                  double density = 0.5) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        DirectedNetwork net = random_graph(n, rng, density);
        bool ok = true;
        for (Modality m : mtdnet::all_modalities()) {
            try {
                mtdnet::global_assortativity(net, m);
            } catch (const mtdnet::DegenerateError&) {
                ok = false;
                break;
            }
        }
        if (ok) return net;
    }
    throw std::runtime_error("could not generate a non-degenerate graph");
}

/// Strongly connected aperiodic random graph: a full cycle plus a reciprocal
/// chord and a triangle chord, plus random extras.
inline DirectedNetwork random_strongly_connected_graph(Index n, std::mt19937_64& rng) {
    MatrixXd W = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) W(i, (i + 1) % n) = 0.2 + 0.8 * mtdnet::uniform01(rng);
    W(1, 0) = 0.3 + 0.5 * mtdnet::uniform01(rng);          // 2-cycle
    if (n > 2) W(2, 0) = 0.3 + 0.5 * mtdnet::uniform01(rng); // 3-cycle
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            if (i == j || W(i, j) > 0.0) continue;
            if (mtdnet::uniform01(rng) < 0.3) W(i, j) = 0.1 + 0.9 * mtdnet::uniform01(rng);
        }
    std::vector<std::string> tickers;
    for (Index i = 0; i < n; ++i) tickers.push_back("N" + std::to_string(i));
    return mtdnet::make_network(std::move(W), std::move(tickers));
}

/// Random desk-scale portfolio instance: daily-return-scale means, a
/// well-conditioned covariance built from a random factor square, and a local
/// assortativity vector in [-0.5, 0.5].
inline std::tuple<mtdnet::MarketMoments, VectorXd> random_instance(Index n, std::mt19937_64& rng) {
    mtdnet::MarketMoments m;
    m.mu.resize(n);
    for (Index i = 0; i < n; ++i) m.mu[i] = -0.05 + 0.20 * mtdnet::uniform01(rng);
    MatrixXd A(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) A(i, j) = mtdnet::uniform01(rng) - 0.5;
    m.sigma = 0.05 * (A.transpose() * A) + 0.02 * MatrixXd::Identity(n, n);
    VectorXd rho(n);
    for (Index i = 0; i < n; ++i) rho[i] = -0.5 + mtdnet::uniform01(rng);
    return {m, rho};
}

} // namespace testsupport
