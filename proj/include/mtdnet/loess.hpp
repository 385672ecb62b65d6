#pragma once

#include "mtdnet/common.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace mtdnet {

/// Loess-smoothed profile of a point cloud with its 95% pointwise band.
struct PlotProfile {
    std::string series;            // e.g. "piraveenan/out-in"
    std::vector<double> x;         // strictly increasing evaluation grid
    std::vector<double> y_smoothed;
    std::vector<double> band_low;
    std::vector<double> band_high;
};

/// Local linear regression with tricube weights over the nearest
/// span-fraction of points, evaluated on `grid_points` evenly spaced
/// positions; the band is fit +- 1.96 pointwise standard errors.
inline PlotProfile loess_smooth(std::vector<double> xs, std::vector<double> ys,
                                double span = 0.75, int grid_points = 100) {
    const std::size_t n = xs.size();
    if (ys.size() != n) throw InputError("loess_smooth: x/y length mismatch");
    if (n < 5) throw InputError("loess_smooth needs at least 5 points");
    if (span <= 0.0 || span > 1.0) throw InputError("loess_smooth: span must lie in (0,1]");
    const auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n)));
    if (k < 3) throw InputError("loess_smooth: span covers fewer than 3 points");
    if (grid_points < 2) throw InputError("loess_smooth needs at least 2 grid points");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> sx(n), sy(n);
    for (std::size_t i = 0; i < n; ++i) {
        sx[i] = xs[order[i]];
        sy[i] = ys[order[i]];
    }

    PlotProfile profile;
    const double x_min = sx.front();
    const double x_max = sx.back();
    for (int g = 0; g < grid_points; ++g) {
        const double x0 =
            x_min + (x_max - x_min) * static_cast<double>(g) / static_cast<double>(grid_points - 1);

        // nearest k points by |x - x0| over the sorted x; a sliding window
        std::size_t left = static_cast<std::size_t>(
            std::lower_bound(sx.begin(), sx.end(), x0) - sx.begin());
        std::size_t lo = left > 0 ? left - 1 : 0, hi = lo;
        while (hi - lo + 1 < k) {
            const bool can_left = lo > 0;
            const bool can_right = hi + 1 < n;
            if (can_left && (!can_right || x0 - sx[lo - 1] <= sx[hi + 1] - x0))
                --lo;
            else if (can_right)
                ++hi;
            else
                break;
        }
        const double h = std::max(std::max(x0 - sx[lo], sx[hi] - x0), 1e-300);

        // weighted linear fit of y on (x - x0)
        double sw = 0, swx = 0, swxx = 0, swy = 0, swxy = 0;
        for (std::size_t i = lo; i <= hi; ++i) {
            const double d = std::abs(sx[i] - x0) / h;
            double wgt = d < 1.0 ? std::pow(1.0 - d * d * d, 3) : 0.0;
            if (wgt <= 0.0) continue;
            const double dx = sx[i] - x0;
            sw += wgt;
            swx += wgt * dx;
            swxx += wgt * dx * dx;
            swy += wgt * sy[i];
            swxy += wgt * dx * sy[i];
        }
        double b0, b1;
        const double det = sw * swxx - swx * swx;
        if (sw <= 0.0) { // all candidate weights vanished: fall back to the window mean
            double m = 0.0;
            for (std::size_t i = lo; i <= hi; ++i) m += sy[i];
            b0 = m / static_cast<double>(hi - lo + 1);
            b1 = 0.0;
        } else if (det <= 1e-300 * sw * sw || swxx <= 0.0) {
            b0 = swy / sw; // degenerate in x: weighted mean
            b1 = 0.0;
        } else {
            b1 = (sw * swxy - swx * swy) / det;
            b0 = (swy - b1 * swx) / sw;
        }

        // pointwise standard error of the fitted value: sigma * ||l||_2 with
        // l the equivalent-kernel weights of the local fit at x0
        double rss = 0.0, wsum = 0.0, l2 = 0.0;
        std::size_t used = 0;
        for (std::size_t i = lo; i <= hi; ++i) {
            const double d = std::abs(sx[i] - x0) / h;
            const double wgt = d < 1.0 ? std::pow(1.0 - d * d * d, 3) : 0.0;
            if (wgt <= 0.0) continue;
            const double dx = sx[i] - x0;
            const double fit_i = b0 + b1 * dx;
            rss += wgt * (sy[i] - fit_i) * (sy[i] - fit_i);
            wsum += wgt;
            double li;
            if (det > 1e-300 * sw * sw && swxx > 0.0)
                li = wgt * (swxx - swx * dx) / det;
            else
                li = wgt / sw;
            l2 += li * li;
            ++used;
        }
        double se = 0.0;
        if (wsum > 0.0 && used > 2) {
            const double sigma2 = rss / wsum * static_cast<double>(used) /
                                  static_cast<double>(used - 2);
            se = std::sqrt(std::max(sigma2, 0.0) * l2);
        }

        profile.x.push_back(x0);
        profile.y_smoothed.push_back(b0);
        profile.band_low.push_back(b0 - 1.96 * se);
        profile.band_high.push_back(b0 + 1.96 * se);
    }
    return profile;
}

inline void write_profiles_csv(const std::vector<PlotProfile>& profiles, std::ostream& out) {
    out << "series,x,y_smoothed,band_low,band_high\n";
    for (const auto& p : profiles)
        for (std::size_t i = 0; i < p.x.size(); ++i)
            out << p.series << ',' << format_g17(p.x[i]) << ',' << format_g17(p.y_smoothed[i])
                << ',' << format_g17(p.band_low[i]) << ',' << format_g17(p.band_high[i]) << "\n";
}

} // namespace mtdnet
