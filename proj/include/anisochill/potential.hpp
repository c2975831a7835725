#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include <boost/math/tools/minima.hpp>

#include "errors.hpp"
#include "fields.hpp"
#include "parallel.hpp"

namespace anisochill {

/// Which quadratic is split off f. ThetaC: kappa = theta_c, so f0 is the pure
/// logarithmic part. InfFpp: kappa = -inf f'' = theta_c - theta.
enum class KappaConvention { ThetaC, InfFpp };

inline std::string_view to_string(KappaConvention k) { return k == KappaConvention::ThetaC ? "theta_c" : "inf_fpp"; }

struct PotentialSpec {
    double theta = 1.0;
    double theta_c = 2.0;
    double lambda = 0.01;
    KappaConvention kappa_convention = KappaConvention::ThetaC;

    double kappa() const { return kappa_convention == KappaConvention::ThetaC ? theta_c : theta_c - theta; }

    void validate() const {
        if (!(theta > 0.0) || !std::isfinite(theta)) throw ValidationError("potential.theta", "must be positive");
        if (!(theta_c > 0.0) || !std::isfinite(theta_c)) throw ValidationError("potential.theta_c", "must be positive");
        if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("potential.lambda", "must lie in (0,1)");
    }

    /// Non-empty when theta >= theta_c: f is then convex and there is no
    /// phase separation.
    std::string warning() const {
        if (theta >= theta_c) return "theta >= theta_c: f is convex, no double well";
        return {};
    }
};

namespace detail {

/// (1+s) log(1+s) + (1-s) log(1-s) with 0 log 0 = 0.
inline double entropy(double s) {
    auto xlogx = [](double x) { return x == 0.0 ? 0.0 : x * std::log(x); };
    return xlogx(1.0 + s) + xlogx(1.0 - s);
}

} // namespace detail

inline double f_value(const PotentialSpec& p, double s) {
    if (!(std::abs(s) <= 1.0)) throw DomainError("f is defined on [-1,1]");
    return 0.5 * p.theta * detail::entropy(s) - 0.5 * p.theta_c * s * s;
}

/// f0 = f + kappa s^2 / 2 on [-1,1].
inline double f0_value(const PotentialSpec& p, double s) { return f_value(p, s) + 0.5 * p.kappa() * s * s; }

inline double f0_prime(const PotentialSpec& p, double s) {
    if (!(std::abs(s) < 1.0)) throw DomainError("f0' is defined on (-1,1)");
    return 0.5 * p.theta * (std::log1p(s) - std::log1p(-s)) + (p.kappa() - p.theta_c) * s;
}

inline double f0_second(const PotentialSpec& p, double s) {
    if (!(std::abs(s) < 1.0)) throw DomainError("f0'' is defined on (-1,1)");
    return p.theta / (1.0 - s * s) + p.kappa() - p.theta_c;
}

/// f0' on (-1+lambda, 1-lambda), continued linearly with slope 1/lambda.
inline double g_lambda(const PotentialSpec& p, double s) {
    const double b = 1.0 - p.lambda;
    if (s >= b) return f0_prime(p, b) + (s - b) / p.lambda;
    if (s <= -b) return f0_prime(p, -b) + (s + b) / p.lambda;
    return f0_prime(p, s);
}

inline double g_lambda_prime(const PotentialSpec& p, double s) {
    const double b = 1.0 - p.lambda;
    if (std::abs(s) >= b) return 1.0 / p.lambda;
    return f0_second(p, s);
}

/// f0(0) + \int_0^s g_lambda.
inline double f0_lambda(const PotentialSpec& p, double s) {
    const double b = 1.0 - p.lambda;
    if (s > b) {
        const double t = s - b;
        return f0_value(p, b) + f0_prime(p, b) * t + 0.5 * t * t / p.lambda;
    }
    if (s < -b) {
        const double t = s + b;
        return f0_value(p, -b) + f0_prime(p, -b) * t + 0.5 * t * t / p.lambda;
    }
    return f0_value(p, s);
}

inline double f_lambda(const PotentialSpec& p, double s) { return f0_lambda(p, s) - 0.5 * p.kappa() * s * s; }

inline double f_lambda_prime(const PotentialSpec& p, double s) { return g_lambda(p, s) - p.kappa() * s; }

/// Lipschitz constant of g_lambda: max(1/lambda, f0''(1-lambda)).
inline double g_lambda_lipschitz(const PotentialSpec& p) {
    return std::max(1.0 / p.lambda, f0_second(p, 1.0 - p.lambda));
}

/// sup_s (coeff s^2 - f0_lambda(s)), so that f0_lambda(s) >= coeff s^2 - C.
/// Finite for coeff < 1/(2 lambda); at coeff = 1/(2 lambda) only when
/// f0'(1-lambda) >= (1-lambda)/lambda, and +inf otherwise.
inline double coercivity_constant(const PotentialSpec& p, double coeff) {
    const double lam = p.lambda, b = 1.0 - lam;
    const double top = 0.5 / lam;
    if (!(coeff >= 0.0) || coeff > top) throw ValidationError("coeff", "must lie in [0, 1/(2 lambda)]");
    auto gap = [&](double s) { return coeff * s * s - f0_lambda(p, s); };

    // |s| <= b: f0 is even, scan [0, b] and polish the best sample
    const int n = 2000;
    double best = 0.0, arg = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double s = b * i / n;
        if (gap(s) > best) {
            best = gap(s);
            arg = s;
        }
    }
    if (arg > 0.0) {
        const double lo = std::max(0.0, arg - b / n), hi = std::min(b, arg + b / n);
        const auto r = boost::math::tools::brent_find_minima([&](double s) { return -gap(s); }, lo, hi, 50);
        best = std::max(best, -r.second);
    }

    // s >= b: gap is quadratic with leading coefficient coeff - top <= 0
    const double slope_at_b = 2.0 * coeff * b - f0_prime(p, b);
    const double curv = 2.0 * (coeff - top);
    if (curv == 0.0) {
        if (slope_at_b > 0.0) return std::numeric_limits<double>::infinity();
        return std::max(best, gap(b));
    }
    const double s_star = b - slope_at_b / curv;
    best = std::max(best, gap(std::max(b, s_star)));
    return best;
}

/// \sum_i f_lambda(c_i) vol.
inline double f_lambda_energy(const PotentialSpec& p, const ScalarField& c) {
    const double vol = c.grid.cell_volume();
    return vol * reduce_sum(c.size(), [&](std::size_t i) { return f_lambda(p, c[i]); });
}

} // namespace anisochill
