#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "quadrature.hpp"

namespace anisochill {

using Matrix = Eigen::MatrixXd;

enum class KernelFamily { ScaledSingular, BbmOverR2, AffineTransformed };
enum class Mollifier { UniformShell, Triangular };

inline std::string_view to_string(KernelFamily f) {
    switch (f) {
    case KernelFamily::ScaledSingular: return "SCALED_SINGULAR";
    case KernelFamily::BbmOverR2: return "BBM_OVER_R2";
    case KernelFamily::AffineTransformed: return "AFFINE_TRANSFORMED";
    }
    return "?";
}

inline std::string_view to_string(Mollifier m) {
    return m == Mollifier::UniformShell ? "UNIFORM_SHELL" : "TRIANGULAR";
}

/// |S^{d-1}|
inline double sphere_measure(int dim) { return dim == 1 ? 2.0 : 2.0 * std::numbers::pi; }

/// C_d = \int_{S^{d-1}} |e_1 . sigma|^2 dH^{d-1}
inline double angular_constant(int dim) { return dim == 1 ? 2.0 : std::numbers::pi; }

/// Raw kernel configuration. `KernelSpec` validates it and precomputes the
/// family constants.
struct KernelParams {
    KernelFamily family = KernelFamily::BbmOverR2;
    /// Radial family that AFFINE_TRANSFORMED evaluates at transform * z.
    KernelFamily base_family = KernelFamily::BbmOverR2;
    int dim = 1;
    double epsilon = 0.1;
    double alpha = 0.5;
    Mollifier mollifier = Mollifier::UniformShell;
    /// Row-major dim x dim entries; empty means identity.
    std::vector<double> transform;
    double moment_radius = 1.0;
};

class KernelSpec {
public:
    explicit KernelSpec(KernelParams p) : p_(std::move(p)) {
        if (p_.dim != 1 && p_.dim != 2)
            throw ValidationError("kernel.dim", "must be 1 or 2");
        if (!(p_.epsilon > 0.0) || !std::isfinite(p_.epsilon))
            throw ValidationError("kernel.epsilon", "must be positive");
        if (!(p_.moment_radius > 0.0))
            throw ValidationError("kernel.moment_radius", "must be positive");
        if (p_.family == KernelFamily::AffineTransformed) {
            if (p_.base_family == KernelFamily::AffineTransformed)
                throw ValidationError("kernel.base_family", "must be a radial family");
        } else {
            p_.base_family = p_.family;
        }
        if (p_.base_family == KernelFamily::ScaledSingular) {
            if (!(p_.alpha > 0.0 && p_.alpha < 2.0))
                throw ValidationError("kernel.alpha", "must lie in (0,2)");
            if (!(p_.epsilon <= 1.0))
                throw ValidationError("kernel.epsilon", "SCALED_SINGULAR requires epsilon in (0,1]");
        }

        const int d = p_.dim;
        transform_ = Matrix::Identity(d, d);
        if (p_.family == KernelFamily::AffineTransformed && !p_.transform.empty()) {
            if (p_.transform.size() != static_cast<std::size_t>(d * d))
                throw ValidationError("kernel.transform", "needs dim*dim row-major entries");
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) transform_(r, c) = p_.transform[r * d + c];
        }
        if (!(std::abs(transform_.determinant()) > 1e-12))
            throw ValidationError("kernel.transform", "matrix is not invertible");
        identity_transform_ = transform_.isIdentity(0.0);

        if (p_.base_family == KernelFamily::ScaledSingular) {
            scale_ = 1.0 / unit_normalization_integral();
            bound_ = 1.0;
        } else {
            // \int_0^\infty eta r^{d-1} dr = 2 / C_d and k = eta / r^2 is supported in
            // (0, eps); min(1, r^2) = r^2 there as long as eps <= 1.
            const double inside = 2.0 / angular_constant(d);
            bound_ = sphere_measure(d) * inside;
            if (p_.epsilon > 1.0) {
                const double eps = p_.epsilon;
                auto g = [&](double r) { return radial(r) * std::min(1.0, r * r) * std::pow(r, d - 1); };
                bound_ = sphere_measure(d) * quad::piecewise(g, {0.0, 1.0, eps}, 0.0).value;
            }
        }
    }

    const KernelParams& params() const noexcept { return p_; }
    int dim() const noexcept { return p_.dim; }
    double epsilon() const noexcept { return p_.epsilon; }
    double alpha() const noexcept { return p_.alpha; }
    KernelFamily family() const noexcept { return p_.family; }
    KernelFamily radial_family() const noexcept { return p_.base_family; }
    double moment_radius() const noexcept { return p_.moment_radius; }
    const Matrix& transform() const noexcept { return transform_; }
    bool is_radial() const noexcept { return identity_transform_; }
    /// c in c |z|^{-d-alpha} (SCALED_SINGULAR); 0 otherwise.
    double scale_constant() const noexcept { return scale_; }
    /// C_0 with k_bar = k_radial / C_0 the normalized bounding radial kernel.
    double bound_constant() const noexcept { return bound_; }

    KernelSpec with_epsilon(double eps) const {
        KernelParams q = p_;
        if (q.family != KernelFamily::AffineTransformed) q.base_family = q.family;
        q.epsilon = eps;
        return KernelSpec(q);
    }

    /// Radial profile of the base family at distance r > 0.
    double radial(double r) const {
        const double eps = p_.epsilon;
        const int d = p_.dim;
        if (p_.base_family == KernelFamily::ScaledSingular) {
            const double a = p_.alpha;
            const double base = std::pow(r, -d - a);
            if (r <= eps) return scale_ * std::pow(eps, a - 2.0) * base;
            if (r <= 1.0) return scale_ * std::pow(eps, a) * base / (r * r);
            return scale_ * std::pow(eps, a) * base;
        }
        if (r >= eps) return 0.0;
        const double norm = 2.0 / angular_constant(d);
        double eta = 0.0;
        if (p_.mollifier == Mollifier::UniformShell)
            eta = norm * d * std::pow(eps, -d);
        else
            eta = norm * d * (d + 1) * std::pow(eps, -d) * (1.0 - r / eps);
        return eta / (r * r);
    }

    double bound_radial(double r) const { return radial(r) / bound_; }

    /// Radii where the base radial profile has kinks or jumps.
    std::vector<double> radial_breaks() const {
        if (p_.base_family == KernelFamily::ScaledSingular) return {p_.epsilon, 1.0};
        return {p_.epsilon};
    }

    /// |transform * z|
    double transformed_norm(std::span<const double> z) const {
        if (p_.dim == 1) return std::abs(transform_(0, 0) * z[0]);
        const double a = transform_(0, 0) * z[0] + transform_(0, 1) * z[1];
        const double b = transform_(1, 0) * z[0] + transform_(1, 1) * z[1];
        return std::sqrt(a * a + b * b);
    }

    double operator()(std::span<const double> z) const {
        bool zero = true;
        for (double v : z) zero = zero && v == 0.0;
        if (zero) throw DomainError("kernel is singular at the origin");
        return radial(transformed_norm(z));
    }

private:
    /// \int k min(1,|z|^2) dz for c = 1; independent of epsilon.
    double unit_normalization_integral() const {
        const double eps = p_.epsilon, a = p_.alpha;
        const double e_inner = std::pow(eps, a - 2.0), e_outer = std::pow(eps, a);
        auto inner = [&](double r) { return e_inner * std::pow(r, 1.0 - a); };
        auto middle = [&](double r) { return e_outer * std::pow(r, -a - 1.0); };
        // \int_1^\infty r^{-a-1} dr with r = 1/t
        auto tail = [&](double t) { return e_outer * std::pow(t, a - 1.0); };
        quad::Result total = quad::graded(inner, 0.0, eps);
        total += quad::adaptive(middle, eps, 1.0);
        total += quad::graded(tail, 0.0, 1.0);
        if (total.error > 1e-9 * std::abs(total.value))
            throw NumericalError("normalization quadrature did not converge");
        return sphere_measure(p_.dim) * total.value;
    }

    KernelParams p_;
    Matrix transform_;
    bool identity_transform_ = true;
    double scale_ = 0.0;
    double bound_ = 1.0;
};

inline double eval_kernel(const KernelSpec& spec, std::span<const double> z) { return spec(z); }

namespace detail {

/// \int_lo^hi g(r) dr for a radial integrand built on the base profile evaluated
/// at scale * r. Graded towards 0 when lo == 0.
template <class G>
quad::Result radial_quad(const KernelSpec& k, G&& g, double lo, double hi, double scale = 1.0) {
    std::vector<double> br{lo, hi};
    for (double b : k.radial_breaks()) {
        const double s = b / scale;
        if (s > lo && s < hi) br.push_back(s);
    }
    return quad::piecewise(g, br, lo == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN());
}

/// \int_lo^\infty g(r) dr; the unbounded part is mapped to (0,1] by r = R/t.
template <class G>
quad::Result radial_quad_to_infinity(const KernelSpec& k, G&& g, double lo, double scale = 1.0) {
    double far = std::max(lo, 1.0 / scale);
    for (double b : k.radial_breaks()) far = std::max(far, b / scale);
    quad::Result total = radial_quad(k, g, lo, far, scale);
    auto mapped = [&](double t) { return g(far / t) * far / (t * t); };
    total += quad::graded(mapped, 0.0, 1.0);
    return total;
}

/// \int_{lo <= |z| <= hi} k(z) w(|z|) sigma sigma^T dz with sigma = z/|z|.
/// Polar coordinates in z; for every direction the radial integral uses the
/// breakpoints of the base profile at |transform sigma| r.
template <class W>
std::pair<Matrix, double> angular_integral(const KernelSpec& k, W&& w, double lo, double hi) {
    const int d = k.dim();
    if (d == 1) {
        const double b = std::abs(k.transform()(0, 0));
        auto g = [&](double r) { return k.radial(b * r) * w(r); };
        const auto res = radial_quad(k, g, lo, hi, b);
        Matrix m(1, 1);
        m(0, 0) = 2.0 * res.value;
        return {m, 2.0 * res.error};
    }
    auto radial_part = [&](double cth, double sth) {
        const double z[2] = {cth, sth};
        const double rho = k.transformed_norm(z);
        auto g = [&](double r) { return k.radial(rho * r) * w(r) * r; };
        return radial_quad(k, g, lo, hi, rho);
    };
    if (k.is_radial()) {
        const auto res = radial_part(1.0, 0.0);
        // \int_0^{2 pi} sigma sigma^T d theta = pi I
        Matrix m = Matrix::Identity(2, 2) * (std::numbers::pi * res.value);
        return {m, 2.0 * std::numbers::pi * res.error};
    }
    // The theta integrand is pi-periodic (k is even) and analytic except where
    // a breakpoint b of the base profile satisfies |B sigma| r = b at r = lo or
    // r = hi. Those angles solve a quadratic form equation in (cos 2t, sin 2t);
    // [0, pi] is split there and each piece gets Gauss-Legendre rules of two
    // orders.
    const Matrix g = k.transform().transpose() * k.transform();
    const double gm = 0.5 * (g(0, 0) + g(1, 1)), gc = 0.5 * (g(0, 0) - g(1, 1)), gs = g(0, 1);
    const double amp = std::hypot(gc, gs), phase = std::atan2(gs, gc);
    std::vector<double> cuts{0.0, std::numbers::pi};
    for (double b : k.radial_breaks()) {
        for (double r : {lo, hi}) {
            if (!(r > 0.0) || !std::isfinite(r) || amp == 0.0) continue;
            // sigma^T G sigma = gm + amp cos(2t - phase) = (b/r)^2
            const double arg = ((b / r) * (b / r) - gm) / amp;
            if (std::abs(arg) >= 1.0) continue;
            const double base = std::acos(arg);
            for (double two_t : {phase + base, phase - base}) {
                double t = 0.5 * two_t;
                t = std::fmod(t, std::numbers::pi);
                if (t < 0.0) t += std::numbers::pi;
                cuts.push_back(t);
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    auto piece = [&](double a, double b, int n) {
        Matrix m = Matrix::Zero(2, 2);
        double rad_err = 0.0;
        const auto& rule = quad::gauss_legendre(n);
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (int q = 0; q < n; ++q) {
            const double th = mid + half * rule.nodes[q];
            const double c = std::cos(th), s = std::sin(th);
            const auto res = radial_part(c, s);
            const double w = rule.weights[q] * half;
            m(0, 0) += w * c * c * res.value;
            m(0, 1) += w * c * s * res.value;
            m(1, 1) += w * s * s * res.value;
            rad_err += w * res.error;
        }
        m(1, 0) = m(0, 1);
        return std::pair{m, rad_err};
    };
    Matrix m = Matrix::Zero(2, 2);
    double err = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double a = cuts[c], b = cuts[c + 1];
        if (b - a <= 0.0) continue;
        const auto [lo_m, lo_err] = piece(a, b, 24);
        const auto [hi_m, hi_err] = piece(a, b, 48);
        m += hi_m;
        err += hi_err + (hi_m - lo_m).cwiseAbs().maxCoeff();
    }
    return {2.0 * m, 2.0 * err};
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

} // namespace detail

/// Second-moment diagnostics of k_epsilon, truncated at the moment radius.
struct MomentReport {
    double epsilon = 0.0;
    double moment_radius = 1.0;
    Matrix second_moment;            // a_jk(eps) = \int_{|z|<=R} k z_j z_k dz
    double near_origin_mass = 0.0;   // \int_{|z|<=1} k |z|^2 dz
    std::vector<double> deltas;
    std::vector<double> tail_mass;   // \int_{delta<=|z|<=R} k dz
    double normalization_check = 0.0;
    double relative_error = 0.0;     // quadrature error estimate
};

inline double normalization_integral(const KernelSpec& spec, double* error = nullptr) {
    const int d = spec.dim();
    auto g = [&](double r) {
        return spec.bound_radial(r) * std::min(1.0, r * r) * std::pow(r, d - 1);
    };
    const auto res = detail::radial_quad_to_infinity(spec, g, 0.0);
    if (error) *error = sphere_measure(d) * res.error;
    return sphere_measure(d) * res.value;
}

inline MomentReport second_moment(const KernelSpec& spec,
                                  std::vector<double> deltas = {0.05, 0.1, 0.2, 0.4}) {
    MomentReport rep;
    rep.epsilon = spec.epsilon();
    rep.moment_radius = spec.moment_radius();
    const double R = spec.moment_radius();

    auto [m, m_err] = detail::angular_integral(spec, [](double r) { return r * r; }, 0.0, R);
    rep.second_moment = m;
    const double scale = std::max(detail::max_abs(m), 1e-300);
    double rel = m_err / scale;

    auto [near, near_err] = detail::angular_integral(spec, [](double r) { return r * r; }, 0.0, 1.0);
    rep.near_origin_mass = near.trace();
    rel = std::max(rel, near_err / std::max(near.trace(), 1e-300));

    std::sort(deltas.begin(), deltas.end());
    rep.deltas = deltas;
    for (double delta : deltas) {
        if (delta >= R) {
            rep.tail_mass.push_back(0.0);
            continue;
        }
        auto [t, t_err] = detail::angular_integral(spec, [](double) { return 1.0; }, delta, R);
        rep.tail_mass.push_back(t.trace());
        rel = std::max(rel, t_err / std::max(t.trace(), 1.0));
    }
    double n_err = 0.0;
    rep.normalization_check = normalization_integral(spec, &n_err);
    rel = std::max(rel, n_err);
    rep.relative_error = rel;
    if (rel > 1e-6) {
        std::ostringstream os;
        os << "second-moment quadrature did not converge (estimated relative error " << rel
           << ", epsilon " << spec.epsilon() << ")";
        throw NumericalError(os.str(), {rel});
    }
    return rep;
}

/// epsilon -> 0 limit of the second moments. `anisotropy` is the coefficient
/// matrix of the limit Dirichlet form: with E_eps = 1/4 \iint k (u(x)-u(y))^2
/// and E_0 = 1/2 \int A grad u . grad u, matching linear functions gives
/// A = lim a(eps) / 2.
struct LimitReport {
    std::vector<double> epsilons;
    std::vector<Matrix> moments;
    std::vector<double> successive_diffs; // |a(eps_i) - a(eps_{i-1})|_max, i >= 1
    Matrix moment_limit;
    Matrix anisotropy;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double rate = std::numeric_limits<double>::quiet_NaN();
    bool extrapolated = false;
    std::string warning;
};

inline LimitReport limit_matrix(const KernelSpec& family, const std::vector<double>& eps_list) {
    if (eps_list.size() < 3)
        throw ValidationError("eps_list", "limit extrapolation needs at least 3 entries");
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0)) throw ValidationError("eps_list", "entries must be positive");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1]))
            throw ValidationError("eps_list", "must be strictly decreasing");
    }
    LimitReport rep;
    rep.epsilons = eps_list;
    for (double eps : eps_list) rep.moments.push_back(second_moment(family.with_epsilon(eps)).second_moment);

    const std::size_t n = eps_list.size();
    double scale = 0.0;
    for (const auto& m : rep.moments) scale = std::max(scale, detail::max_abs(m));
    const double floor = 1e-10 * scale;
    for (std::size_t i = 1; i < n; ++i)
        rep.successive_diffs.push_back(detail::max_abs(rep.moments[i] - rep.moments[i - 1]));

    for (std::size_t i = 1; i < rep.successive_diffs.size(); ++i) {
        const double cur = rep.successive_diffs[i], prev = rep.successive_diffs[i - 1];
        if (cur > floor && !(cur < prev)) {
            std::ostringstream os;
            os << "second moments are not Cauchy along eps_list:";
            for (std::size_t k = 0; k < n; ++k) {
                os << "\n  eps=" << eps_list[k] << " a=[";
                const auto& m = rep.moments[k];
                for (int r = 0; r < m.rows(); ++r)
                    for (int c = 0; c < m.cols(); ++c) os << (r + c ? " " : "") << m(r, c);
                os << "]";
            }
            throw NumericalError(os.str(), rep.successive_diffs);
        }
    }

    const Matrix& last = rep.moments[n - 1];
    const Matrix& before = rep.moments[n - 2];
    const double d_last = rep.successive_diffs.back();
    const double d_prev = rep.successive_diffs[rep.successive_diffs.size() - 2];
    Matrix limit = last;
    if (d_last <= floor) {
        rep.rate = std::numeric_limits<double>::infinity();
    } else {
        rep.rate = std::log(d_prev / d_last) / std::log(eps_list[n - 3] / eps_list[n - 2]);
        if (rep.rate > 0.5 && rep.rate < 2.0) {
            const double r = eps_list[n - 2] / eps_list[n - 1];
            limit = (r * last - before) / (r - 1.0);
            rep.extrapolated = true;
        } else {
            std::ostringstream os;
            os << "observed rate " << rep.rate
               << " outside (0.5, 2); using the smallest-epsilon moment";
            rep.warning = os.str();
        }
    }
    rep.moment_limit = 0.5 * (limit + limit.transpose());
    rep.anisotropy = 0.5 * rep.moment_limit;
    Eigen::SelfAdjointEigenSolver<Matrix> es(rep.anisotropy);
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.max_eigenvalue = es.eigenvalues().maxCoeff();
    return rep;
}

struct AssumptionReport {
    std::size_t evenness_samples = 0;
    bool even = true;
    bool nonnegative = true;
    double normalization = 0.0;
    std::vector<double> deltas;
    std::vector<double> epsilons;
    /// tail[i][j] = \int_{|z| >= deltas[i]} k_bar_{epsilons[j]} dz
    std::vector<std::vector<double>> tail;
    /// Every row strictly decreases along epsilons (zeros may repeat).
    bool tails_decreasing = true;
    /// Restricted to epsilons below delta, every row strictly decreases or is 0.
    /// Above delta the tail can grow as epsilon shrinks: for eta / r^2 with
    /// eta ~ eps^{-d} on (0, eps) it scales like eps^{-2} log(eps / delta) in d = 2.
    bool tails_decreasing_below_delta = true;
};

inline AssumptionReport check_assumptions(const KernelSpec& spec, const std::vector<double>& deltas,
                                          std::vector<double> eps_sequence = {0.4, 0.2, 0.1, 0.05}) {
    AssumptionReport rep;
    const int d = spec.dim();
    std::mt19937_64 rng(20240917);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    constexpr std::size_t samples = 2000;
    for (std::size_t s = 0; s < samples; ++s) {
        double z[2] = {unif(rng), d == 2 ? unif(rng) : 0.0};
        double mz[2] = {-z[0], -z[1]};
        const double a = spec(std::span<const double>(z, d));
        const double b = spec(std::span<const double>(mz, d));
        rep.even = rep.even && a == b;
        rep.nonnegative = rep.nonnegative && a >= 0.0;
    }
    rep.evenness_samples = samples;

    rep.normalization = normalization_integral(spec);
    if (std::abs(rep.normalization - 1.0) > 1e-4) {
        std::ostringstream os;
        os << "bounding radial kernel of " << to_string(spec.radial_family())
           << " is not normalized: \\int k min(1,|z|^2) = " << rep.normalization;
        throw ConfigurationError(os.str());
    }

    rep.deltas = deltas;
    rep.epsilons = eps_sequence;
    for (double delta : deltas) {
        std::vector<double> row;
        for (double eps : eps_sequence) {
            const KernelSpec k = spec.with_epsilon(eps);
            auto g = [&](double r) { return k.bound_radial(r) * std::pow(r, d - 1); };
            row.push_back(sphere_measure(d) * detail::radial_quad_to_infinity(k, g, delta).value);
        }
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[j - 1] || (row[j - 1] > 0.0 && row[j] >= row[j - 1]))
                rep.tails_decreasing = false;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (!(eps_sequence[j] < delta)) continue;
            if (row[j] > 0.0 && !(row[j] < prev)) rep.tails_decreasing_below_delta = false;
            prev = row[j];
        }
        rep.tail.push_back(std::move(row));
    }
    return rep;
}

} // namespace anisochill
