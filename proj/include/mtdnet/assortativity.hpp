#pragma once

#include "mtdnet/common.hpp"
#include "mtdnet/network.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace mtdnet {

/// Which strength (in or out) is read at the source and at the target end of
/// every edge; the four combinations are the assortativity modalities.
struct Modality {
    StrengthMode source;
    StrengthMode target;

    bool operator==(const Modality&) const = default;
};

inline const std::array<Modality, 4>& all_modalities() {
    static constexpr std::array<Modality, 4> modes{
        Modality{StrengthMode::in, StrengthMode::in},
        Modality{StrengthMode::in, StrengthMode::out},
        Modality{StrengthMode::out, StrengthMode::in},
        Modality{StrengthMode::out, StrengthMode::out}};
    return modes;
}

inline std::string to_string(Modality m) {
    return to_string(m.source) + "-" + to_string(m.target);
}

inline Modality modality_from_string(const std::string& s) {
    for (Modality m : all_modalities())
        if (to_string(m) == s) return m;
    throw InputError("unknown modality: " + s + " (expected in-in, in-out, out-in, out-out)");
}

enum class Measure { global, piraveenan, sabek, peel };

inline std::string to_string(Measure m) {
    switch (m) {
        case Measure::global: return "global";
        case Measure::piraveenan: return "piraveenan";
        case Measure::sabek: return "sabek";
        case Measure::peel: return "peel";
    }
    return "?";
}

/// Global coefficient plus the per-node local vector for one (measure,
/// modality) pair, with the weighted moments that normalized it.
struct AssortativityResult {
    Measure measure = Measure::global;
    Modality modality{StrengthMode::out, StrengthMode::in};
    double rho_g = 0.0;
    VectorXd rho_local;   // empty for the global measure
    struct {
        double mu_source = 0.0;
        double mu_target = 0.0;
        double sigma_source = 0.0;
        double sigma_target = 0.0;
    } aux;
};

/// A probability distribution over nodes anchored at node l; `alpha` is the
/// walk-continuation probability, or the multiscale integral when `multiscale`.
struct NodeDistribution {
    VectorXd probs;
    Index anchor = 0;
    double alpha = 0.0;
    bool multiscale = false;
};

namespace detail {

/// Weighted first and second moments of source/target excess strengths over
/// the edge set, shared by every assortativity measure.
struct EdgeMoments {
    double omega = 0.0;
    double sum_x = 0.0;    // sum over edges of w * es_source
    double sum_y = 0.0;    //                      w * es_target
    double sum_xx = 0.0;
    double sum_yy = 0.0;
    double sum_xy = 0.0;
    double var_x = 0.0;    // the bracket terms of the global denominator
    double var_y = 0.0;
    double mu_x = 0.0;     // omega-normalized weighted means
    double mu_y = 0.0;
    double sigma_x = 0.0;  // omega-normalized weighted standard deviations
    double sigma_y = 0.0;
    Index edge_count = 0;
};

inline EdgeMoments edge_moments(const DirectedNetwork& net, Modality mode) {
    EdgeMoments m;
    m.omega = net.omega;
    for (Index i = 0; i < net.n; ++i)
        for (Index j = 0; j < net.n; ++j) {
            if (!net.has_edge(i, j)) continue;
            const double w = net.W(i, j);
            const double x = excess_strength(net, i, j, NodeEnd::source, mode.source);
            const double y = excess_strength(net, i, j, NodeEnd::target, mode.target);
            m.sum_x += w * x;
            m.sum_y += w * y;
            m.sum_xx += w * x * x;
            m.sum_yy += w * y * y;
            m.sum_xy += w * x * y;
            ++m.edge_count;
        }
    if (m.edge_count == 0) throw DegenerateError("assortativity undefined on an empty edge set");
    m.var_x = m.sum_xx - m.sum_x * m.sum_x / m.omega;
    m.var_y = m.sum_yy - m.sum_y * m.sum_y / m.omega;
    if (m.var_x <= 1e-14 || m.var_y <= 1e-14)
        throw DegenerateError("degenerate assortativity in mode " + to_string(mode) +
                              ": zero weighted variance of " +
                              std::string(m.var_x <= 1e-14 ? "source" : "target") +
                              " excess strengths");
    m.mu_x = m.sum_x / m.omega;
    m.mu_y = m.sum_y / m.omega;
    m.sigma_x = std::sqrt(m.var_x / m.omega);
    m.sigma_y = std::sqrt(m.var_y / m.omega);
    return m;
}

} // namespace detail

/// Weighted Pearson correlation of source/target excess strengths over all
/// directed edges.
inline AssortativityResult global_assortativity(const DirectedNetwork& net, Modality mode) {
    const auto m = detail::edge_moments(net, mode);
    AssortativityResult res;
    res.measure = Measure::global;
    res.modality = mode;
    res.rho_g = (m.sum_xy - m.sum_x * m.sum_y / m.omega) / std::sqrt(m.var_x * m.var_y);
    res.aux = {m.mu_x, m.mu_y, m.sigma_x, m.sigma_y};
    return res;
}

/// Per-node decomposition of the global coefficient: node i keeps the terms
/// of its out-edges, against the full-network target mean and denominator.
/// The locals sum to the global coefficient.
inline AssortativityResult local_piraveenan(const DirectedNetwork& net, Modality mode) {
    const auto m = detail::edge_moments(net, mode);
    const double denom = std::sqrt(m.var_x * m.var_y);

    AssortativityResult res;
    res.measure = Measure::piraveenan;
    res.modality = mode;
    res.rho_local = VectorXd::Zero(net.n);
    res.aux = {m.mu_x, m.mu_y, m.sigma_x, m.sigma_y};
    for (Index i = 0; i < net.n; ++i) {
        double cross = 0.0;
        double own_x = 0.0;
        for (Index j = 0; j < net.n; ++j) {
            if (!net.has_edge(i, j)) continue;
            const double w = net.W(i, j);
            const double x = excess_strength(net, i, j, NodeEnd::source, mode.source);
            const double y = excess_strength(net, i, j, NodeEnd::target, mode.target);
            cross += w * x * y;
            own_x += w * x;
        }
        res.rho_local[i] = (cross - own_x * m.sum_y / m.omega) / denom;
    }
    res.rho_g = res.rho_local.sum();
    return res;
}

/// One edge's share of the global coefficient.
inline double edge_assortativity_sabek(const DirectedNetwork& net, Index i, Index j, Modality mode) {
    if (!net.has_edge(i, j)) throw InputError("edge_assortativity_sabek: edge does not exist");
    const auto m = detail::edge_moments(net, mode);
    const double x = excess_strength(net, i, j, NodeEnd::source, mode.source);
    const double y = excess_strength(net, i, j, NodeEnd::target, mode.target);
    return net.W(i, j) * (x - m.mu_x) * (y - m.mu_y) / (m.omega * m.sigma_x * m.sigma_y);
}

/// Node local = sum of the edge assortativities of its out-edges; sums to the
/// global coefficient across nodes.
inline AssortativityResult local_sabek(const DirectedNetwork& net, Modality mode) {
    const auto m = detail::edge_moments(net, mode);

    AssortativityResult res;
    res.measure = Measure::sabek;
    res.modality = mode;
    res.rho_local = VectorXd::Zero(net.n);
    res.aux = {m.mu_x, m.mu_y, m.sigma_x, m.sigma_y};
    for (Index i = 0; i < net.n; ++i)
        for (Index j = 0; j < net.n; ++j) {
            if (!net.has_edge(i, j)) continue;
            const double x = excess_strength(net, i, j, NodeEnd::source, mode.source);
            const double y = excess_strength(net, i, j, NodeEnd::target, mode.target);
            res.rho_local[i] += net.W(i, j) * (x - m.mu_x) * (y - m.mu_y) /
                                (m.omega * m.sigma_x * m.sigma_y);
        }
    res.rho_g = res.rho_local.sum();
    return res;
}

/// Stationary distribution of the random walk that follows out-edges with
/// probability w_ij / s_i^out and restarts to the anchor with probability
/// (1 - alpha). Dangling nodes restart to the anchor. Power iteration to an
/// L1 change of `tol`.
inline NodeDistribution personalized_pagerank(const DirectedNetwork& net, Index l, double alpha,
                                              double tol = 1e-12, int max_iters = 10000) {
    if (alpha < 0.0 || alpha > 1.0) throw InputError("personalized_pagerank: alpha must be in [0,1]");
    if (l < 0 || l >= net.n) throw InputError("personalized_pagerank: anchor out of range");

    NodeDistribution dist;
    dist.anchor = l;
    dist.alpha = alpha;
    dist.probs = VectorXd::Zero(net.n);
    dist.probs[l] = 1.0;
    if (alpha == 0.0) return dist;

    // row-stochastic walk matrix, transposed once for the repeated products
    MatrixXd Qt(net.n, net.n);
    VectorXd dangling = VectorXd::Zero(net.n);
    for (Index i = 0; i < net.n; ++i) {
        if (net.s_out[i] > 0.0) {
            for (Index j = 0; j < net.n; ++j) Qt(j, i) = net.W(i, j) / net.s_out[i];
        } else {
            Qt.col(i).setZero();
            dangling[i] = 1.0;
        }
    }

    VectorXd pi = dist.probs;
    for (int iter = 0; iter < max_iters; ++iter) {
        VectorXd next = alpha * (Qt * pi);
        next[l] += alpha * dangling.dot(pi) + (1.0 - alpha);
        const double residual = (next - pi).cwiseAbs().sum();
        if (residual <= tol) {
            dist.probs = next;
            return dist;
        }
        // damped update: keeps periodic walks (possible at alpha = 1) converging
        pi = 0.5 * (pi + next);
    }
    throw DegenerateError("personalized PageRank did not converge; final residual above " +
                          format_g17(tol));
}

namespace detail {

/// Gauss-Legendre nodes and weights on [0,1] via Newton iteration on the
/// Legendre recurrence. Nodes are strictly interior.
inline void gauss_legendre_unit(int npoints, std::vector<double>& nodes, std::vector<double>& weights) {
    if (npoints < 2) throw InputError("quadrature needs at least 2 points");
    nodes.resize(static_cast<std::size_t>(npoints));
    weights.resize(static_cast<std::size_t>(npoints));
    const int m = (npoints + 1) / 2;
    for (int k = 0; k < m; ++k) {
        double x = std::cos(M_PI * (k + 0.75) / (npoints + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= npoints; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = npoints * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[static_cast<std::size_t>(k)] = 0.5 * (1.0 - x); // map [-1,1] -> [0,1]
        nodes[static_cast<std::size_t>(npoints - 1 - k)] = 0.5 * (1.0 + x);
        weights[static_cast<std::size_t>(k)] = 0.5 * w;
        weights[static_cast<std::size_t>(npoints - 1 - k)] = 0.5 * w;
    }
}

} // namespace detail

/// Integral over alpha of the personalized PageRank distribution,
/// approximated by Gauss-Legendre quadrature with interior nodes and
/// renormalized onto the simplex.
inline NodeDistribution multiscale_weights(const DirectedNetwork& net, Index l,
                                           int quadrature_points = 21) {
    std::vector<double> nodes, weights;
    detail::gauss_legendre_unit(quadrature_points, nodes, weights);

    NodeDistribution dist;
    dist.anchor = l;
    dist.multiscale = true;
    dist.alpha = 1.0;
    dist.probs = VectorXd::Zero(net.n);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        // geometric mixing at rate (1+alpha)/2: nodes near 1 need more iterations
        const int iters = std::max(20000, static_cast<int>(100.0 / (1.0 - nodes[k])));
        dist.probs += weights[k] * personalized_pagerank(net, l, nodes[k], 1e-12, iters).probs;
    }
    dist.probs /= dist.probs.sum();
    return dist;
}

/// Multiscale distributions for every anchor; they do not depend on the
/// modality, so callers evaluating several modalities share them.
inline std::vector<VectorXd> multiscale_weights_all(const DirectedNetwork& net,
                                                    int quadrature_points = 21) {
    std::vector<VectorXd> anchors;
    anchors.reserve(static_cast<std::size_t>(net.n));
    for (Index l = 0; l < net.n; ++l)
        anchors.push_back(multiscale_weights(net, l, quadrature_points).probs);
    return anchors;
}

/// Locality-reweighted assortativity for one node distribution: every edge
/// term is scaled by the distribution mass at its source and normalized by
/// the source out-strength instead of omega.
inline double peel_assortativity_for_distribution(const DirectedNetwork& net, Modality mode,
                                                  const VectorXd& node_weights) {
    const auto m = detail::edge_moments(net, mode);
    double total = 0.0;
    for (Index i = 0; i < net.n; ++i) {
        if (node_weights[i] == 0.0) continue;
        for (Index j = 0; j < net.n; ++j) {
            if (!net.has_edge(i, j)) continue;
            const double x = excess_strength(net, i, j, NodeEnd::source, mode.source);
            const double y = excess_strength(net, i, j, NodeEnd::target, mode.target);
            total += node_weights[i] * net.W(i, j) * (x - m.mu_x) * (y - m.mu_y) /
                     (net.s_out[i] * m.sigma_x * m.sigma_y);
        }
    }
    return total;
}

/// Multiscale local assortativity: one value per anchor node, using the
/// alpha-integrated PageRank distribution. The locals do not sum to the
/// global coefficient.
inline AssortativityResult local_peel(const DirectedNetwork& net, Modality mode,
                                      const std::vector<VectorXd>& anchor_weights) {
    const auto m = detail::edge_moments(net, mode); // validates non-degeneracy up front

    AssortativityResult res;
    res.measure = Measure::peel;
    res.modality = mode;
    res.rho_local = VectorXd::Zero(net.n);
    res.aux = {m.mu_x, m.mu_y, m.sigma_x, m.sigma_y};
    for (Index l = 0; l < net.n; ++l)
        res.rho_local[l] = peel_assortativity_for_distribution(net, mode, anchor_weights[static_cast<std::size_t>(l)]);
    res.rho_g = global_assortativity(net, mode).rho_g;
    return res;
}

inline AssortativityResult local_peel(const DirectedNetwork& net, Modality mode,
                                      int quadrature_points = 21) {
    detail::edge_moments(net, mode); // reject degenerate inputs before the walk solves
    return local_peel(net, mode, multiscale_weights_all(net, quadrature_points));
}

/// Diagnostic hook: the same measure at one fixed walk scale alpha.
inline AssortativityResult local_peel_at_alpha(const DirectedNetwork& net, Modality mode,
                                               double alpha) {
    const auto m = detail::edge_moments(net, mode);
    AssortativityResult res;
    res.measure = Measure::peel;
    res.modality = mode;
    res.rho_local = VectorXd::Zero(net.n);
    res.aux = {m.mu_x, m.mu_y, m.sigma_x, m.sigma_y};
    for (Index l = 0; l < net.n; ++l) {
        const NodeDistribution w = personalized_pagerank(net, l, alpha);
        res.rho_local[l] = peel_assortativity_for_distribution(net, mode, w.probs);
    }
    res.rho_g = global_assortativity(net, mode).rho_g;
    return res;
}

inline AssortativityResult compute_assortativity(const DirectedNetwork& net, Measure measure,
                                                 Modality mode, int quadrature_points = 21) {
    switch (measure) {
        case Measure::global: return global_assortativity(net, mode);
        case Measure::piraveenan: return local_piraveenan(net, mode);
        case Measure::sabek: return local_sabek(net, mode);
        case Measure::peel: return local_peel(net, mode, quadrature_points);
    }
    throw InputError("unknown assortativity measure");
}

/// CSV rows `ticker,measure,modality,rho_local` plus one GLOBAL row per result.
inline void write_assortativity_csv(const std::vector<AssortativityResult>& results,
                                    const std::vector<std::string>& tickers, std::ostream& out) {
    out << "ticker,measure,modality,rho_local\n";
    for (const auto& res : results) {
        for (Index i = 0; i < res.rho_local.size(); ++i)
            out << tickers[static_cast<std::size_t>(i)] << ',' << to_string(res.measure) << ','
                << to_string(res.modality) << ',' << format_g17(res.rho_local[i]) << '\n';
        out << "GLOBAL," << to_string(res.measure) << ',' << to_string(res.modality) << ','
            << format_g17(res.rho_g) << '\n';
    }
}

} // namespace mtdnet
