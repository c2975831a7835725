#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "errors.hpp"
#include "parallel.hpp"

namespace anisochill {

/// Uniform cell-centered grid on [0, L_0] (x [0, L_1]). Cell (i0, i1) has flat
/// index i0 + n0 * i1.
class Grid {
public:
    Grid() = default;
    Grid(int dim, std::array<int, 2> n, std::array<double, 2> length)
        : dim_(dim), n_(n), length_(length) {
        if (dim != 1 && dim != 2) throw ValidationError("grid.dim", "must be 1 or 2");
        if (dim == 1) {
            n_[1] = 1;
            length_[1] = 1.0;
        }
        for (int a = 0; a < dim; ++a) {
            if (n_[a] < 4) throw ValidationError("grid.n", "needs at least 4 cells per axis");
            if (!(length_[a] > 0.0) || !std::isfinite(length_[a]))
                throw ValidationError("grid.length", "must be positive");
        }
    }

    static Grid line(int n, double length = 1.0) { return Grid(1, {n, 1}, {length, 1.0}); }
    static Grid rect(int n0, int n1, double l0 = 1.0, double l1 = 1.0) {
        return Grid(2, {n0, n1}, {l0, l1});
    }

    int dim() const noexcept { return dim_; }
    int n(int axis) const noexcept { return n_[axis]; }
    double length(int axis) const noexcept { return length_[axis]; }
    double h(int axis) const noexcept { return length_[axis] / n_[axis]; }
    double cell_volume() const noexcept { return dim_ == 1 ? h(0) : h(0) * h(1); }
    double volume() const noexcept { return dim_ == 1 ? length_[0] : length_[0] * length_[1]; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(n_[0]) * n_[1]; }
    double diameter() const noexcept { return dim_ == 1 ? length_[0] : std::hypot(length_[0], length_[1]); }

    std::size_t index(int i0, int i1 = 0) const noexcept {
        return static_cast<std::size_t>(i0) + static_cast<std::size_t>(n_[0]) * i1;
    }
    int coord(std::size_t idx, int axis) const noexcept {
        return axis == 0 ? static_cast<int>(idx % n_[0]) : static_cast<int>(idx / n_[0]);
    }
    double center(std::size_t idx, int axis) const noexcept {
        return (coord(idx, axis) + 0.5) * h(axis);
    }

    bool operator==(const Grid& o) const noexcept {
        return dim_ == o.dim_ && n_ == o.n_ && length_ == o.length_;
    }

private:
    int dim_ = 1;
    std::array<int, 2> n_{4, 1};
    std::array<double, 2> length_{1.0, 1.0};
};

struct ScalarField {
    Grid grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
    ScalarField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.size()) throw UsageError("field size does not match grid");
    }

    /// Samples f at cell centers.
    static ScalarField sample(const Grid& g, const std::function<double(double, double)>& f) {
        ScalarField u(g);
        for (std::size_t i = 0; i < g.size(); ++i)
            u.values[i] = f(g.center(i, 0), g.dim() == 2 ? g.center(i, 1) : 0.0);
        return u;
    }

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

struct VectorField {
    Grid grid;
    std::vector<std::array<double, 2>> values;

    VectorField() = default;
    explicit VectorField(const Grid& g) : grid(g), values(g.size(), {0.0, 0.0}) {}

    bool finite() const {
        for (const auto& v : values)
            if (!std::isfinite(v[0]) || !std::isfinite(v[1])) return false;
        return true;
    }
};

inline void require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) throw UsageError("fields live on different grids");
}

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid);
    ScalarField r(a.grid);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}
inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid);
    ScalarField r(a.grid);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}
inline ScalarField operator*(double s, const ScalarField& a) {
    ScalarField r(a.grid);
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
}

/// \int u over Omega divided by |Omega|.
inline double mean(const ScalarField& u) {
    const double s = reduce_sum(u.size(), [&](std::size_t i) { return u[i]; });
    return s * u.grid.cell_volume() / u.grid.volume();
}

/// Sum_i a_i b_i vol, the discrete L^2 inner product.
inline double inner(const ScalarField& a, const ScalarField& b) {
    require_same_grid(a.grid, b.grid);
    return reduce_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; }) * a.grid.cell_volume();
}

inline double l2_norm(const ScalarField& u) { return std::sqrt(std::max(0.0, inner(u, u))); }

inline double max_abs(const ScalarField& u) {
    double m = 0.0;
    for (double v : u.values) m = std::max(m, std::abs(v));
    return m;
}

/// u - mean(u)
inline ScalarField project_mean_zero(const ScalarField& u) {
    const double m = mean(u);
    ScalarField r(u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) r[i] = u[i] - m;
    return r;
}

namespace detail {

inline double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

template <class Fn>
void for_cells(std::size_t n, Fn&& fn) {
    parallel_ranges(n, 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

inline void require_positive(const ScalarField& m) {
    for (double v : m.values)
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("mobility must be positive");
}

/// Calls fn(j, axis, sign) for every interior neighbour j of cell i; sign is
/// +1 for the upper neighbour along `axis`.
template <class Fn>
void for_neighbours(const Grid& g, std::size_t i, Fn&& fn) {
    for (int a = 0; a < g.dim(); ++a) {
        const int c = g.coord(i, a);
        const std::size_t stride = a == 0 ? 1 : static_cast<std::size_t>(g.n(0));
        if (c > 0) fn(i - stride, a, -1);
        if (c + 1 < g.n(a)) fn(i + stride, a, +1);
    }
}

} // namespace detail

/// Discrete div(m grad p): harmonic-mean face mobility, zero flux on the
/// boundary. Each cell gathers its own faces so the loop is race-free.
inline ScalarField neumann_divergence(const ScalarField& m_coef, const ScalarField& p) {
    require_same_grid(m_coef.grid, p.grid);
    detail::require_positive(m_coef);
    const Grid& g = p.grid;
    ScalarField out(g);
    detail::for_cells(g.size(), [&](std::size_t i) {
        double s = 0.0;
        detail::for_neighbours(g, i, [&](std::size_t j, int a, int) {
            const double h = g.h(a);
            s += detail::harmonic(m_coef[i], m_coef[j]) * (p[j] - p[i]) / (h * h);
        });
        out[i] = s;
    });
    return out;
}

/// Matrix of `neumann_divergence(m_coef, .)`.
inline Eigen::SparseMatrix<double> neumann_matrix(const ScalarField& m_coef) {
    detail::require_positive(m_coef);
    const Grid& g = m_coef.grid;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(5 * g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        detail::for_neighbours(g, i, [&](std::size_t j, int a, int) {
            const double c = detail::harmonic(m_coef[i], m_coef[j]) / (g.h(a) * g.h(a));
            t.emplace_back(i, j, c);
            t.emplace_back(i, i, -c);
        });
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::SparseMatrix<double> k(n, n);
    k.setFromTriplets(t.begin(), t.end());
    return k;
}

/// Sum over interior faces of m_face (grad_face u)^2 vol.
inline double face_dirichlet(const ScalarField& m_coef, const ScalarField& u) {
    require_same_grid(m_coef.grid, u.grid);
    const Grid& g = u.grid;
    const double s = reduce_sum(g.size(), [&](std::size_t i) {
        double t = 0.0;
        for (int a = 0; a < g.dim(); ++a) {
            if (g.coord(i, a) + 1 >= g.n(a)) continue;
            const std::size_t j = i + (a == 0 ? 1 : static_cast<std::size_t>(g.n(0)));
            const double d = (u[j] - u[i]) / g.h(a);
            t += detail::harmonic(m_coef[i], m_coef[j]) * d * d;
        }
        return t;
    });
    return s * g.cell_volume();
}

/// Sum over interior faces of m_face (grad_face u)(grad_face v) vol.
inline double face_product(const ScalarField& m_coef, const ScalarField& u, const ScalarField& v) {
    const Grid& g = u.grid;
    const double s = reduce_sum(g.size(), [&](std::size_t i) {
        double t = 0.0;
        for (int a = 0; a < g.dim(); ++a) {
            if (g.coord(i, a) + 1 >= g.n(a)) continue;
            const std::size_t j = i + (a == 0 ? 1 : static_cast<std::size_t>(g.n(0)));
            t += detail::harmonic(m_coef[i], m_coef[j]) * (u[j] - u[i]) * (v[j] - v[i]) /
                 (g.h(a) * g.h(a));
        }
        return t;
    });
    return s * g.cell_volume();
}

struct SolveInfo {
    int iterations = 0;
    double residual = 0.0; // ||div(m grad u) - rhs||_2 / ||rhs||_2
    std::vector<double> history;
};

/// Solves div(m grad u) = rhs with zero-flux boundary, mean(u) = 0. Jacobi
/// preconditioned CG on the mean-zero subspace; rhs must have zero mean.
/// Stops at tol relative residual or at the roundoff level eps |K|_inf |u|_2
/// of the residual evaluation, whichever is larger.
inline ScalarField neumann_solve(const ScalarField& m_coef, const ScalarField& rhs, double tol,
                                 SolveInfo* info = nullptr) {
    require_same_grid(m_coef.grid, rhs.grid);
    detail::require_positive(m_coef);
    if (!(tol > 0.0)) throw UsageError("neumann_solve: tol must be positive");
    const Grid& g = rhs.grid;
    const std::size_t n = g.size();
    const double rhs_inf = max_abs(rhs);
    const double rhs_mean = mean(rhs);
    if (std::abs(rhs_mean) > 1e-10 * rhs_inf)
        throw UsageError("neumann_solve: rhs has nonzero mean (incompatible Neumann data)");
    SolveInfo local;
    SolveInfo& out = info ? *info : local;
    out = {};
    ScalarField u(g);
    if (rhs_inf == 0.0) return u;

    std::vector<double> diag(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        detail::for_neighbours(g, i, [&](std::size_t j, int a, int) {
            diag[i] += detail::harmonic(m_coef[i], m_coef[j]) / (g.h(a) * g.h(a));
        });

    auto dot = [&](const ScalarField& a, const ScalarField& b) {
        return reduce_sum(n, [&](std::size_t i) { return a[i] * b[i]; });
    };
    const double rhs_norm = std::sqrt(dot(rhs, rhs));
    // K = -div(m grad .), solve K u = -rhs
    auto apply_k = [&](const ScalarField& p) {
        ScalarField r = neumann_divergence(m_coef, p);
        for (double& v : r.values) v = -v;
        return r;
    };
    auto precondition = [&](const ScalarField& r) {
        ScalarField z(g);
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        return project_mean_zero(z);
    };
    auto true_residual = [&] {
        ScalarField r(g);
        const ScalarField ku = apply_k(u);
        for (std::size_t i = 0; i < n; ++i) r[i] = -rhs[i] - ku[i];
        return r;
    };
    const double floor = std::abs(rhs_mean) * std::sqrt(static_cast<double>(n));
    double k_inf = 0.0;
    for (double d : diag) k_inf = std::max(k_inf, 2.0 * d);
    auto target_for = [&] {
        const double roundoff = std::numeric_limits<double>::epsilon() * k_inf * std::sqrt(dot(u, u));
        return std::max(tol * rhs_norm, roundoff) + floor;
    };
    double target = target_for();

    ScalarField r = project_mean_zero(true_residual());
    ScalarField z = precondition(r);
    ScalarField p = z;
    double rz = dot(r, z);
    const int cap = static_cast<int>(10 * n);
    for (int it = 1; it <= cap; ++it) {
        const ScalarField ap = apply_k(p);
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) break;
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rn = std::sqrt(dot(r, r));
        out.history.push_back(rn / rhs_norm);
        out.iterations = it;
        if (rn <= 0.5 * target) {
            target = target_for();
            const ScalarField tr = true_residual();
            const double tn = std::sqrt(dot(tr, tr));
            if (tn <= target) {
                out.residual = tn / rhs_norm;
                return project_mean_zero(u);
            }
            // recurrence drifted: restart from the true residual
            r = project_mean_zero(tr);
            z = precondition(r);
            p = z;
            rz = dot(r, z);
            continue;
        }
        z = precondition(r);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    const ScalarField tr = true_residual();
    const double tn = std::sqrt(dot(tr, tr));
    out.residual = tn / rhs_norm;
    if (tn <= target_for()) return project_mean_zero(u);
    std::ostringstream os;
    os << "neumann_solve: no convergence after " << out.iterations << " iterations (relative residual "
       << out.residual << ", tol " << tol << ")";
    throw NumericalError(os.str(), out.history);
}

/// Discrete dual norm of a mean-zero u: |grad v|_2 with div grad v = -u.
inline double hminus1_norm(const ScalarField& u) {
    const ScalarField one(u.grid, 1.0);
    const ScalarField v = neumann_solve(one, -1.0 * u, 1e-10);
    return std::sqrt(face_dirichlet(one, v));
}

/// Discrete div(w c): face velocity is the average of the adjacent cell
/// values, c is upwinded, boundary faces carry no flux.
inline ScalarField transport_divergence(const VectorField& w, const ScalarField& c) {
    require_same_grid(w.grid, c.grid);
    const Grid& g = c.grid;
    ScalarField out(g);
    detail::for_cells(g.size(), [&](std::size_t i) {
        double s = 0.0;
        detail::for_neighbours(g, i, [&](std::size_t j, int a, int sign) {
            const double wf = 0.5 * (w.values[i][a] + w.values[j][a]);
            // outward flux from i through the face shared with j
            const double outward = sign * wf;
            const double upwind = outward > 0.0 ? c[i] : c[j];
            s += outward * upwind / g.h(a);
        });
        out[i] = s;
    });
    return out;
}

enum class VelocityPreset { Zero, Vortex };

/// Cell-centered samples of a velocity preset at time t. VORTEX is the
/// rotated gradient of psi = sin(pi x / L0) sin(pi y / L1) / pi, scaled by
/// `amplitude` and modulated by cos(omega t); its normal component vanishes on
/// the boundary.
inline VectorField velocity_field(const Grid& g, VelocityPreset preset, double t, double amplitude = 1.0,
                                  double omega = 0.0) {
    VectorField w(g);
    if (preset == VelocityPreset::Zero) return w;
    if (g.dim() != 2) throw ValidationError("velocity", "VORTEX needs a 2D grid");
    const double l0 = g.length(0), l1 = g.length(1), pi = std::numbers::pi;
    const double s = amplitude * std::cos(omega * t);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.center(i, 0), y = g.center(i, 1);
        w.values[i][0] = s * std::sin(pi * x / l0) * std::cos(pi * y / l1) / l1;
        w.values[i][1] = -s * std::cos(pi * x / l0) * std::sin(pi * y / l1) / l0;
    }
    return w;
}

/// (1/h) \int_t^{t+h} v(., tau) d tau by 3-point Gauss-Legendre in time.
inline VectorField interval_average(const Grid& g, VelocityPreset preset, double t, double h,
                                    double amplitude = 1.0, double omega = 0.0) {
    VectorField w(g);
    if (preset == VelocityPreset::Zero) return w;
    const double nodes[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double weights[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    for (int q = 0; q < 3; ++q) {
        const VectorField v = velocity_field(g, preset, t + 0.5 * h * (1.0 + nodes[q]), amplitude, omega);
        for (std::size_t i = 0; i < g.size(); ++i)
            for (int a = 0; a < 2; ++a) w.values[i][a] += weights[q] * v.values[i][a];
    }
    return w;
}

/// CSV with a `# grid` header line, then `i0,i1,value` per cell.
inline void write_field(std::ostream& os, const ScalarField& u) {
    const Grid& g = u.grid;
    os << "# grid dim=" << g.dim() << " n0=" << g.n(0) << " n1=" << g.n(1) << std::setprecision(17)
       << " L0=" << g.length(0) << " L1=" << g.length(1) << "\n";
    os << "i0,i1,value\n";
    for (std::size_t i = 0; i < u.size(); ++i)
        os << g.coord(i, 0) << "," << g.coord(i, 1) << "," << u[i] << "\n";
}

inline void save_field(const ScalarField& u, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw UsageError("cannot write " + path);
    write_field(os, u);
}

inline ScalarField load_field(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read " + path);
    std::string line;
    std::getline(is, line);
    int dim = 0, n0 = 0, n1 = 0;
    double l0 = 0.0, l1 = 0.0;
    if (std::sscanf(line.c_str(), "# grid dim=%d n0=%d n1=%d L0=%lf L1=%lf", &dim, &n0, &n1, &l0, &l1) != 5)
        throw UsageError("missing grid header in " + path);
    const Grid g(dim, {n0, n1}, {l0, l1});
    ScalarField u(g);
    std::getline(is, line);
    std::size_t count = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        int i0 = 0, i1 = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf", &i0, &i1, &v) != 3) throw UsageError("bad row in " + path);
        u[g.index(i0, i1)] = v;
        ++count;
    }
    if (count != g.size()) throw UsageError("row count does not match grid in " + path);
    return u;
}

} // namespace anisochill
