#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "fields.hpp"
#include "kernels.hpp"
#include "local_operator.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace anisochill {

/// How w_ij approximates \iint_{cell_i x cell_j} k(x - y) dx dy.
enum class PairQuadrature {
    /// vol^2 k(x_i - x_j); the self-cell term is dropped.
    Midpoint,
    /// vol^2 \int T_o k |z|^2 / |z_o|^2 with T_o the density of x - y for x, y
    /// uniform in the two cells (tensor tent around the center offset z_o).
    /// The self-cell moment \int T_0 k z z^T is moved onto the nearest
    /// neighbours so that linear functions see the exact second moment.
    MomentConsistent,
};

inline std::string_view to_string(PairQuadrature q) {
    return q == PairQuadrature::Midpoint ? "MIDPOINT" : "MOMENT_CONSISTENT";
}

struct AssemblyOptions {
    double cutoff = 0.0; // <= 0 selects the grid diameter
    std::size_t max_pairs = 40'000'000;
    PairQuadrature quadrature = PairQuadrature::MomentConsistent;
};

struct Pair {
    std::uint32_t i;
    std::uint32_t j;
    double w;
};

/// Cell offset (o0, o1) with flat shift o0 + n0 o1 and its pair weight.
struct Offset {
    int o0;
    int o1;
    long shift;
    double w;
};

namespace detail {

/// \int T_o(z) k(z) z^2 dz in d = 1 for o >= 0.
inline double tent_moment_1d(const KernelSpec& k, double h, int o) {
    const double b = std::abs(k.transform()(0, 0));
    const double zc = o * h;
    auto f = [&](double z) {
        const double r = std::abs(z);
        if (r == 0.0) return 0.0;
        const double t = (1.0 - std::abs(z - zc) / h) / h;
        return t * k.radial(b * r) * z * z;
    };
    const double lo = o == 0 ? 0.0 : zc - h, hi = zc + h;
    std::vector<double> br{lo, hi};
    if (zc > lo) br.push_back(zc);
    for (double beta : k.radial_breaks()) {
        const double s = beta / b;
        if (s > lo && s < hi) br.push_back(s);
    }
    const double v = quad::piecewise(f, br, 0.0, 1e-12).value;
    return o == 0 ? 2.0 * v : v;
}

/// Roots x of a x^2 + 2 b x + c = 0 inside (lo, hi).
inline void quadratic_roots(double a, double b, double c, double lo, double hi, std::vector<double>& out) {
    if (a == 0.0) {
        if (b != 0.0) {
            const double x = -c / (2.0 * b);
            if (x > lo && x < hi) out.push_back(x);
        }
        return;
    }
    const double disc = b * b - a * c;
    if (disc < 0.0) return;
    const double s = std::sqrt(disc);
    for (double x : {(-b - s) / a, (-b + s) / a})
        if (x > lo && x < hi) out.push_back(x);
}

/// \int T_o(z) k(z) q(z) dz in d = 2 with q = |z|^2 (entry < 0) or z_a z_b
/// (entry 0: z0^2, 1: z0 z1, 2: z1^2).
inline double tent_moment_2d(const KernelSpec& k, double h0, double h1, int o0, int o1, int entry) {
    const Eigen::Matrix2d g = (k.transform().transpose() * k.transform()).topLeftCorner<2, 2>();
    const double c0 = o0 * h0, c1 = o1 * h1;
    const double x_lo = c0 - h0, x_hi = c0 + h0, y_lo = c1 - h1, y_hi = c1 + h1;
    auto weight = [&](double z0, double z1) {
        switch (entry) {
        case 0: return z0 * z0;
        case 1: return z0 * z1;
        case 2: return z1 * z1;
        default: return z0 * z0 + z1 * z1;
        }
    };
    auto f = [&](double z0, double z1) {
        if (z0 == 0.0 && z1 == 0.0) return 0.0;
        const double r = std::sqrt(g(0, 0) * z0 * z0 + 2.0 * g(0, 1) * z0 * z1 + g(1, 1) * z1 * z1);
        const double t = (1.0 - std::abs(z0 - c0) / h0) * (1.0 - std::abs(z1 - c1) / h1) / (h0 * h1);
        return t * k.radial(r) * weight(z0, z1);
    };
    const auto breaks = k.radial_breaks();
    // reflection z0 -> -z0 (or z1 -> -z1) maps T_o to itself and flips z0 z1
    if (entry == 1 && g(0, 1) == 0.0 && (o0 == 0 || o1 == 0)) return 0.0;

    // Smooth case: the support square avoids 0 and every profile breakpoint.
    const bool contains_origin = x_lo <= 0.0 && x_hi >= 0.0 && y_lo <= 0.0 && y_hi >= 0.0;
    if (!contains_origin) {
        auto rad = [&](double z0, double z1) {
            return std::sqrt(g(0, 0) * z0 * z0 + 2.0 * g(0, 1) * z0 * z1 + g(1, 1) * z1 * z1);
        };
        double rmax = 0.0;
        for (double z0 : {x_lo, x_hi})
            for (double z1 : {y_lo, y_hi}) rmax = std::max(rmax, rad(z0, z1));
        // minimum of the convex norm over the square lies on an edge
        double rmin = std::numeric_limits<double>::infinity();
        auto edge_min = [&](double fixed, bool fixed_is_z1, double lo, double hi) {
            // minimize along the free coordinate x of the quadratic form
            double x = fixed_is_z1 ? -g(0, 1) * fixed / g(0, 0) : -g(0, 1) * fixed / g(1, 1);
            x = std::clamp(x, lo, hi);
            rmin = std::min(rmin, fixed_is_z1 ? rad(x, fixed) : rad(fixed, x));
        };
        edge_min(y_lo, true, x_lo, x_hi);
        edge_min(y_hi, true, x_lo, x_hi);
        edge_min(x_lo, false, y_lo, y_hi);
        edge_min(x_hi, false, y_lo, y_hi);
        bool crosses = false;
        for (double beta : breaks) crosses = crosses || (beta > rmin && beta < rmax);
        if (!crosses) {
            const auto& rule = quad::gauss_legendre(8);
            double total = 0.0;
            for (double ya : {y_lo, c1})
                for (double xa : {x_lo, c0}) {
                    double s = 0.0;
                    for (int p = 0; p < 8; ++p)
                        for (int q = 0; q < 8; ++q) {
                            const double z0 = xa + 0.5 * h0 * (1.0 + rule.nodes[p]);
                            const double z1 = ya + 0.5 * h1 * (1.0 + rule.nodes[q]);
                            s += rule.weights[p] * rule.weights[q] * f(z0, z1);
                        }
                    total += s * 0.25 * h0 * h1;
                }
            return total;
        }
    }

    // Iterated integral with every kink of the inner and outer integrands
    // as a breakpoint.
    auto inner = [&](double z1) {
        std::vector<double> br{x_lo, c0, x_hi};
        if (x_lo < 0.0 && x_hi > 0.0) br.push_back(0.0);
        for (double beta : breaks)
            quadratic_roots(g(0, 0), g(0, 1) * z1, g(1, 1) * z1 * z1 - beta * beta, x_lo, x_hi, br);
        auto fz = [&](double z0) { return f(z0, z1); };
        return quad::piecewise(fz, br, 0.0, 1e-11).value;
    };
    std::vector<double> br{y_lo, c1, y_hi};
    std::vector<double> singular{0.0};
    if (y_lo < 0.0 && y_hi > 0.0) br.push_back(0.0);
    const double det = g.determinant();
    for (double beta : breaks) {
        // where a level set of |B z| is tangent to z1 = const the inner
        // integral has a square-root singularity
        const double tangent = beta * std::sqrt(g(0, 0) / det);
        for (double t : {-tangent, tangent})
            if (t > y_lo && t < y_hi) {
                br.push_back(t);
                singular.push_back(t);
            }
        for (double z0 : {x_lo, c0, x_hi, 0.0})
            quadratic_roots(g(1, 1), g(0, 1) * z0, g(0, 0) * z0 * z0 - beta * beta, y_lo, y_hi, br);
    }
    return quad::piecewise(inner, br, singular, 1e-10).value;
}

inline double offset_norm(const Grid& g, int o0, int o1) {
    return std::hypot(o0 * g.h(0), g.dim() == 2 ? o1 * g.h(1) : 0.0);
}

/// Positive-half offsets (shift > 0) within the cutoff with positive weight,
/// sorted by shift.
inline std::vector<Offset> offset_weights(const KernelSpec& k, const Grid& g, double cutoff, PairQuadrature quad_kind) {
    const int d = g.dim();
    const double vol = g.cell_volume();
    std::vector<Offset> offs;
    const int m1 = d == 2 ? g.n(1) - 1 : 0;
    for (int o1 = 0; o1 <= m1; ++o1)
        for (int o0 = -(g.n(0) - 1); o0 <= g.n(0) - 1; ++o0) {
            if (o1 == 0 && o0 <= 0) continue;
            if (offset_norm(g, o0, o1) > cutoff) continue;
            offs.push_back({o0, o1, o0 + static_cast<long>(g.n(0)) * o1, 0.0});
        }
    parallel_ranges(offs.size(), 16, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            Offset& o = offs[t];
            const double z0 = o.o0 * g.h(0), z1 = d == 2 ? o.o1 * g.h(1) : 0.0;
            const double r2 = z0 * z0 + z1 * z1;
            if (quad_kind == PairQuadrature::Midpoint) {
                const double z[2] = {z0, z1};
                o.w = vol * vol * k(std::span<const double>(z, d));
            } else if (d == 1) {
                o.w = vol * vol * tent_moment_1d(k, g.h(0), o.o0) / r2;
            } else {
                o.w = vol * vol * tent_moment_2d(k, g.h(0), g.h(1), o.o0, o.o1, -1) / r2;
            }
        }
    });
    if (quad_kind == PairQuadrature::MomentConsistent) {
        auto find = [&](int o0, int o1) -> Offset* {
            for (auto& o : offs)
                if (o.o0 == o0 && o.o1 == o1) return &o;
            return nullptr;
        };
        if (d == 1) {
            const double dself = tent_moment_1d(k, g.h(0), 0);
            if (Offset* o = find(1, 0)) o->w += vol * vol * dself / (2.0 * g.h(0) * g.h(0));
        } else {
            const double h0 = g.h(0), h1 = g.h(1);
            const double d00 = tent_moment_2d(k, h0, h1, 0, 0, 0);
            const double d11 = tent_moment_2d(k, h0, h1, 0, 0, 2);
            const double d01 = k.is_radial() ? 0.0 : tent_moment_2d(k, h0, h1, 0, 0, 1);
            Offset* plus = find(1, 1);
            Offset* minus = find(-1, 1);
            double dp = 0.0, dm = 0.0;
            if (plus && minus) {
                dp = std::max(0.0, d01) / (2.0 * h0 * h1);
                dm = std::max(0.0, -d01) / (2.0 * h0 * h1);
                plus->w += vol * vol * dp;
                minus->w += vol * vol * dm;
            }
            if (Offset* o = find(1, 0)) o->w += vol * vol * std::max(0.0, d00 / (2.0 * h0 * h0) - dp - dm);
            if (Offset* o = find(0, 1)) o->w += vol * vol * std::max(0.0, d11 / (2.0 * h1 * h1) - dp - dm);
        }
    }
    std::erase_if(offs, [](const Offset& o) { return !(o.w > 0.0); });
    for (const auto& o : offs)
        if (!std::isfinite(o.w)) throw NumericalError("non-finite pair weight");
    std::sort(offs.begin(), offs.end(), [](const Offset& a, const Offset& b) { return a.shift < b.shift; });
    return offs;
}

inline std::size_t pairs_for_offset(const Grid& g, const Offset& o) {
    return static_cast<std::size_t>(g.n(0) - std::abs(o.o0)) *
           static_cast<std::size_t>(g.n(1) - std::abs(o.o1));
}

} // namespace detail

/// Assembled pair weights realizing B_eps, E_eps and L_eps on a grid. Weights
/// depend only on the cell offset; the explicit pair list is kept sorted by
/// (i, j) and every unordered pair appears once.
class NonlocalForm {
public:
    NonlocalForm(const KernelSpec& spec, const Grid& grid, const AssemblyOptions& opt = {})
        : spec_(spec), grid_(grid), quadrature_(opt.quadrature) {
        const auto t0 = std::chrono::steady_clock::now();
        if (spec.dim() != grid.dim()) throw UsageError("kernel and grid dimensions differ");
        double min_h = grid.h(0);
        if (grid.dim() == 2) min_h = std::min(min_h, grid.h(1));
        cutoff_ = opt.cutoff > 0.0 ? opt.cutoff : grid.diameter();
        if (!(cutoff_ > min_h)) throw ValidationError("nonlocal.cutoff", "must exceed the grid spacing");

        half_ = detail::offset_weights(spec, grid, cutoff_, opt.quadrature);
        std::size_t total = 0;
        for (const auto& o : half_) total += detail::pairs_for_offset(grid, o);
        if (total > opt.max_pairs) {
            std::ostringstream os;
            os << total << " pairs exceed the budget nonlocal.max_pairs = " << opt.max_pairs;
            throw CapacityError(os.str());
        }
        for (const auto& o : half_) full_.push_back({-o.o0, -o.o1, -o.shift, o.w});
        std::reverse(full_.begin(), full_.end());
        full_.insert(full_.end(), half_.begin(), half_.end());

        // pair list in (i, j) order: per-row counts, prefix sums, parallel fill
        const std::size_t n = grid.size();
        std::vector<std::size_t> start(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t c = 0;
            for (const auto& o : half_) c += in_range(i, o) ? 1 : 0;
            start[i + 1] = start[i] + c;
        }
        pairs_.resize(total);
        parallel_ranges(n, 1024, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                std::size_t p = start[i];
                for (const auto& o : half_)
                    if (in_range(i, o))
                        pairs_[p++] = {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + o.shift), o.w};
            }
        });
        assembly_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    const KernelSpec& spec() const noexcept { return spec_; }
    const Grid& grid() const noexcept { return grid_; }
    double cutoff() const noexcept { return cutoff_; }
    PairQuadrature quadrature() const noexcept { return quadrature_; }
    const std::vector<Pair>& pairs() const noexcept { return pairs_; }
    /// Offsets with shift > 0 and positive weight, sorted by shift.
    const std::vector<Offset>& offsets() const noexcept { return half_; }
    double assembly_seconds() const noexcept { return assembly_seconds_; }

    /// 1/2 sum_{i<j} w_ij (u_i - u_j)^2
    double energy(const ScalarField& u) const {
        require_same_grid(grid_, u.grid);
        return 0.5 * reduce_sum(pairs_.size(), [&](std::size_t p) {
                   const Pair& q = pairs_[p];
                   const double d = u[q.i] - u[q.j];
                   return q.w * d * d;
               });
    }

    /// sum_{i<j} w_ij (u_i - u_j)(v_i - v_j)
    double bilinear(const ScalarField& u, const ScalarField& v) const {
        require_same_grid(grid_, u.grid);
        require_same_grid(grid_, v.grid);
        return reduce_sum(pairs_.size(), [&](std::size_t p) {
            const Pair& q = pairs_[p];
            return q.w * (u[q.i] - u[q.j]) * (v[q.i] - v[q.j]);
        });
    }

    /// (L u)_i = sum_j w_ij (u_i - u_j) / vol, each row summed in offset order.
    ScalarField apply(const ScalarField& u) const {
        require_same_grid(grid_, u.grid);
        ScalarField out(grid_);
        const double vol = grid_.cell_volume();
        parallel_ranges(grid_.size(), 256, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double s = 0.0;
                for (const auto& o : full_)
                    if (in_range(i, o)) s += o.w * (u[i] - u[i + o.shift]);
                out[i] = s / vol;
            }
        });
        return out;
    }

    /// Matrix of L (so that apply(u) = L u).
    Eigen::MatrixXd dense_operator() const {
        const auto n = static_cast<Eigen::Index>(grid_.size());
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
        const double vol = grid_.cell_volume();
        for (const auto& p : pairs_) {
            const double w = p.w / vol;
            l(p.i, p.i) += w;
            l(p.j, p.j) += w;
            l(p.i, p.j) -= w;
            l(p.j, p.i) -= w;
        }
        return l;
    }

    Eigen::SparseMatrix<double> sparse_operator() const {
        const auto n = static_cast<Eigen::Index>(grid_.size());
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(4 * pairs_.size());
        const double vol = grid_.cell_volume();
        for (const auto& p : pairs_) {
            const double w = p.w / vol;
            t.emplace_back(p.i, p.i, w);
            t.emplace_back(p.j, p.j, w);
            t.emplace_back(p.i, p.j, -w);
            t.emplace_back(p.j, p.i, -w);
        }
        Eigen::SparseMatrix<double> l(n, n);
        l.setFromTriplets(t.begin(), t.end());
        return l;
    }

    /// Largest number of partners of a single cell.
    std::size_t max_row_degree() const { return 2 * half_.size(); }

private:
    bool in_range(std::size_t i, const Offset& o) const {
        const int c0 = grid_.coord(i, 0) + o.o0;
        if (c0 < 0 || c0 >= grid_.n(0)) return false;
        if (grid_.dim() == 1) return true;
        const int c1 = grid_.coord(i, 1) + o.o1;
        return c1 >= 0 && c1 < grid_.n(1);
    }

    KernelSpec spec_;
    Grid grid_;
    double cutoff_ = 0.0;
    PairQuadrature quadrature_;
    std::vector<Offset> half_;
    std::vector<Offset> full_;
    std::vector<Pair> pairs_;
    double assembly_seconds_ = 0.0;
};

inline NonlocalForm assemble(const KernelSpec& spec, const Grid& grid, const AssemblyOptions& opt = {}) {
    return NonlocalForm(spec, grid, opt);
}

struct GammaRow {
    double epsilon = 0.0;
    double e_eps = 0.0;
    double e_0 = 0.0;
    double rel_gap = 0.0;
    std::size_t pairs = 0;
};

/// E_eps(u) along eps_list against E_0(u) = 1/2 \int A grad u . grad u.
inline std::vector<GammaRow> gamma_energy_table(const KernelSpec& family, const std::vector<double>& eps_list,
                                                const ScalarField& u, const Eigen::MatrixXd& a,
                                                const AssemblyOptions& opt = {}) {
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1])) throw ValidationError("eps_list", "must be strictly decreasing");
    const double e0 = AnisotropicStencil(u.grid, a).energy(u);
    bool constant = true;
    for (double v : u.values) constant = constant && v == u[0];
    if (e0 == 0.0 && !constant) throw DomainError("E_0(u) = 0 for a nonconstant field (degenerate A)");
    std::vector<GammaRow> rows;
    for (double eps : eps_list) {
        GammaRow r;
        r.epsilon = eps;
        if (!constant) {
            const NonlocalForm form(family.with_epsilon(eps), u.grid, opt);
            r.e_eps = form.energy(u);
            r.pairs = form.pairs().size();
        }
        r.e_0 = constant ? 0.0 : e0;
        r.rel_gap = constant ? 0.0 : std::abs(r.e_eps - e0) / e0;
        rows.push_back(r);
    }
    return rows;
}

} // namespace anisochill
