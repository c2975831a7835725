#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "fields.hpp"

namespace anisochill {

/// Discrete Dirichlet form 1/2 \int A grad u . grad u on a cell-centered grid:
///   1/2 vol [ sum_xfaces a11 Dx^2 + sum_yfaces a22 Dy^2 + 2 a12 sum_corners Dx_c Dy_c ]
/// with Dx, Dy face differences and Dx_c, Dy_c their averages at interior
/// vertices. Boundary faces carry nothing (zero co-normal flux). For A = a I
/// this is the 5-point stencil; it is positive semidefinite whenever A is.
class AnisotropicStencil {
public:
    AnisotropicStencil(const Grid& g, const Eigen::MatrixXd& a) : grid_(g) {
        const int d = g.dim();
        if (a.rows() != d || a.cols() != d) throw ValidationError("A", "dimension does not match the grid");
        a_ = 0.5 * (a + a.transpose());
        const double vol = g.cell_volume();
        std::vector<Eigen::Triplet<double>> t;
        auto add_face = [&](std::size_t i, std::size_t j, double coef) {
            t.emplace_back(i, i, coef);
            t.emplace_back(j, j, coef);
            t.emplace_back(i, j, -coef);
            t.emplace_back(j, i, -coef);
        };
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (int ax = 0; ax < d; ++ax) {
                if (g.coord(i, ax) + 1 >= g.n(ax)) continue;
                const std::size_t j = i + (ax == 0 ? 1 : static_cast<std::size_t>(g.n(0)));
                add_face(i, j, vol * a_(ax, ax) / (g.h(ax) * g.h(ax)));
            }
        }
        if (d == 2 && a_(0, 1) != 0.0) {
            const double h0 = g.h(0), h1 = g.h(1);
            for (int i1 = 0; i1 + 1 < g.n(1); ++i1)
                for (int i0 = 0; i0 + 1 < g.n(0); ++i0) {
                    const std::size_t c[4] = {g.index(i0, i1), g.index(i0 + 1, i1), g.index(i0, i1 + 1),
                                              g.index(i0 + 1, i1 + 1)};
                    // Dx_c = gx . u, Dy_c = gy . u on the four surrounding cells
                    const double gx[4] = {-0.5 / h0, 0.5 / h0, -0.5 / h0, 0.5 / h0};
                    const double gy[4] = {-0.5 / h1, -0.5 / h1, 0.5 / h1, 0.5 / h1};
                    for (int p = 0; p < 4; ++p)
                        for (int q = 0; q < 4; ++q)
                            t.emplace_back(c[p], c[q], vol * a_(0, 1) * (gx[p] * gy[q] + gy[p] * gx[q]));
                }
        }
        s_.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
        s_.setFromTriplets(t.begin(), t.end());
        s_.makeCompressed();
    }

    const Grid& grid() const noexcept { return grid_; }
    const Eigen::MatrixXd& matrix_a() const noexcept { return a_; }
    /// S with energy(u) = 1/2 u^T S u.
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& stiffness() const noexcept { return s_; }

    double energy(const ScalarField& u) const {
        require_same_grid(grid_, u.grid);
        const ScalarField su = times_stiffness(u);
        return 0.5 * reduce_sum(u.size(), [&](std::size_t i) { return u[i] * su[i]; });
    }

    /// Discrete -div(A grad u) = S u / vol.
    ScalarField apply(const ScalarField& u) const {
        ScalarField r = times_stiffness(u);
        const double vol = grid_.cell_volume();
        for (double& v : r.values) v /= vol;
        return r;
    }

    /// Matrix of `apply`.
    Eigen::SparseMatrix<double> sparse_operator() const {
        Eigen::SparseMatrix<double> l = s_;
        l /= grid_.cell_volume();
        return l;
    }

    Eigen::MatrixXd dense_operator() const { return Eigen::MatrixXd(sparse_operator()); }

private:
    ScalarField times_stiffness(const ScalarField& u) const {
        ScalarField r(grid_);
        for (Eigen::Index i = 0; i < s_.outerSize(); ++i) {
            double acc = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(s_, i); it; ++it)
                acc += it.value() * u[static_cast<std::size_t>(it.col())];
            r[static_cast<std::size_t>(i)] = acc;
        }
        return r;
    }

    Grid grid_;
    Eigen::MatrixXd a_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> s_;
};

} // namespace anisochill
