#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace anisochill::quad {

struct Result {
    double value = 0.0;
    double error = 0.0; // absolute error estimate

    Result& operator+=(const Result& o) {
        value += o.value;
        error += o.error;
        return *this;
    }
};

struct Rule {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule, computed once by Newton iteration on P_n.
inline const Rule& gauss_legendre(int n) {
    static std::mutex mutex;
    static std::map<int, Rule> cache;
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
    Rule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

template <class F>
double fixed_gauss(F&& f, double a, double b, int n) {
    const Rule& r = gauss_legendre(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.weights[i] * f(mid + half * r.nodes[i]);
    return s * half;
}

namespace detail {

/// One Gauss-Kronrod 7/15 panel: value, |K15 - G7| and the L1 estimate.
template <class F>
Result kronrod_panel(F& f, double a, double b, double* l1) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    using gl = boost::math::quadrature::gauss<double, 7>;
    const auto& x = gk::abscissa();
    const auto& wk = gk::weights();
    const auto& wg = gl::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double f0 = f(mid);
    double k = wk[0] * f0, g = wg[0] * f0, abs_k = wk[0] * std::abs(f0);
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double fl = f(mid - half * x[i]), fr = f(mid + half * x[i]);
        k += wk[i] * (fl + fr);
        abs_k += wk[i] * (std::abs(fl) + std::abs(fr));
        if (i % 2 == 0) g += wg[i / 2] * (fl + fr);
    }
    *l1 = abs_k * half;
    return {k * half, std::abs(k - g) * half};
}

template <class F>
Result kronrod_recurse(F& f, double a, double b, Result top, double abs_tol, unsigned depth) {
    if (top.error <= abs_tol || depth == 0) return top;
    const double mid = 0.5 * (a + b);
    double l1 = 0.0;
    Result sum = kronrod_recurse(f, a, mid, kronrod_panel(f, a, mid, &l1), 0.5 * abs_tol, depth - 1);
    sum += kronrod_recurse(f, mid, b, kronrod_panel(f, mid, b, &l1), 0.5 * abs_tol, depth - 1);
    return sum;
}

} // namespace detail

/// Adaptive Gauss-Kronrod (7/15) on a smooth panel. The tolerance is relative
/// to the L1 norm of the first estimate, so integrands that cancel to zero
/// still terminate.
template <class F>
Result adaptive(F&& f, double a, double b, double rel_tol = 1e-13, unsigned max_depth = 20) {
    if (b <= a) return {};
    double l1 = 0.0;
    const Result top = detail::kronrod_panel(f, a, b, &l1);
    return detail::kronrod_recurse(f, a, b, top, rel_tol * l1, max_depth);
}

/// Integral over [a, b] of a function with an integrable singularity at `a`.
/// Panels shrink geometrically towards `a` (ratio 0.5 by default). The
/// remaining sub-panel [a, a + (b - a) ratio^levels] is estimated by summing
/// the geometric series fitted to the last panel contributions, which is exact
/// for power-law singularities; when the contributions are not geometric a
/// 20-point Gauss rule is used instead, with the 10-point rule as error check.
template <class F>
Result graded(F&& f, double a, double b, int levels = 40, double ratio = 0.5,
              double rel_tol = 1e-13) {
    Result total;
    if (b <= a) return total;
    const double len = b - a;
    double hi = 1.0;
    double p_prev2 = 0.0, p_prev = 0.0, p_last = 0.0;
    for (int k = 0; k < levels; ++k) {
        const double lo = hi * ratio;
        const Result panel = adaptive(f, a + len * lo, a + len * hi, rel_tol, 8);
        total += panel;
        p_prev2 = p_prev;
        p_prev = p_last;
        p_last = panel.value;
        hi = lo;
        if (k < 3 && k + 1 < levels) continue;
        // geometric tail once the panel ratio has settled
        const double q1 = p_prev / p_prev2, q2 = p_last / p_prev;
        if (std::isfinite(q1) && std::isfinite(q2) && q2 > 0.0 && q2 < 1.0 &&
            std::abs(q2 - q1) <= 1e-3 * q2) {
            const double rest = p_last * q2 / (1.0 - q2);
            const double err = std::abs(rest) * (std::abs(q2 - q1) / (1.0 - q2) + 1e-6);
            if (err <= rel_tol * std::abs(total.value) || k + 1 == levels) {
                total.value += rest;
                total.error += err;
                return total;
            }
        }
        if (p_last == 0.0 && p_prev == 0.0 && k + 1 < levels) {
            // vanishing integrand near a; nothing left to extrapolate
            const double inner = fixed_gauss(f, a, a + len * hi, 10);
            if (inner == 0.0) return total;
        }
    }
    const double inner20 = fixed_gauss(f, a, a + len * hi, 20);
    const double inner10 = fixed_gauss(f, a, a + len * hi, 10);
    total.value += inner20;
    total.error += std::abs(inner20 - inner10);
    return total;
}

/// Integral over consecutive pieces [p0,p1], [p1,p2], ...; pieces touching
/// one of `singular_points` are graded towards it (split in half when both
/// ends are singular), the rest are adaptive.
template <class F>
Result piecewise(F&& f, std::vector<double> breaks, const std::vector<double>& singular_points,
                 double rel_tol = 1e-13) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    auto singular = [&](double x) {
        return std::find(singular_points.begin(), singular_points.end(), x) != singular_points.end();
    };
    // rough piece sizes so that small pieces get an absolute share of the budget
    std::vector<double> rough(breaks.size(), 0.0);
    double rough_total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        if (b <= a || singular(a) || singular(b)) continue;
        rough[k] = std::abs(fixed_gauss(f, a, b, 10));
        rough_total += rough[k];
    }
    Result total;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        if (b <= a) continue;
        const bool sa = singular(a), sb = singular(b);
        const double mid = sa && sb ? 0.5 * (a + b) : (sa ? b : a);
        if (sa) total += graded(f, a, mid, 40, 0.5, rel_tol);
        if (sb) {
            auto mirrored = [&](double t) { return f(b - t); };
            total += graded(mirrored, 0.0, b - mid, 40, 0.5, rel_tol);
        }
        if (!sa && !sb) {
            const double share = rough[k] > 0.0 ? rel_tol * rough_total / rough[k] : 1e-3;
            total += adaptive(f, a, b, std::clamp(share, rel_tol, 1e-3));
        }
    }
    return total;
}

template <class F>
Result piecewise(F&& f, std::vector<double> breaks, double singular_point, double rel_tol = 1e-13) {
    return piecewise(std::forward<F>(f), std::move(breaks), std::vector<double>{singular_point}, rel_tol);
}

} // namespace anisochill::quad
