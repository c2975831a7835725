#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "errors.hpp"
#include "fields.hpp"
#include "local_operator.hpp"
#include "potential.hpp"
#include "stepper.hpp"

namespace anisochill {

/// Local anisotropic Cahn-Hilliard model: E_0(c) = 1/2 \int A grad c . grad c + \int f_lambda(c).
class LocalModel {
public:
    LocalModel(const Eigen::MatrixXd& a, const PotentialSpec& pot, MobilityPreset mob, const Grid& grid)
        : pot_(pot), mobility_(mob), stencil_(grid, check(a, grid)) {
        pot_.validate();
    }

    const Grid& grid() const noexcept { return stencil_.grid(); }
    const Eigen::MatrixXd& matrix_a() const noexcept { return stencil_.matrix_a(); }
    const PotentialSpec& potential() const noexcept { return pot_; }
    MobilityPreset mobility() const noexcept { return mobility_; }
    /// The discrete -div(A grad .) with zero co-normal flux.
    const AnisotropicStencil& stencil() const noexcept { return stencil_; }

private:
    static Eigen::MatrixXd check(const Eigen::MatrixXd& a, const Grid& g) {
        if (a.rows() != g.dim() || a.cols() != g.dim()) throw ValidationError("local.A", "dimension does not match the grid");
        const Eigen::MatrixXd s = 0.5 * (a + a.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        if (!(es.eigenvalues().minCoeff() > 0.0)) throw ValidationError("local.A", "must be positive definite");
        return s;
    }

    PotentialSpec pot_;
    MobilityPreset mobility_;
    AnisotropicStencil stencil_;
};

struct LocalEnergy {
    double gradient_part = 0.0;
    double potential_part = 0.0;
    double total = 0.0;
    /// max(|c| - 1, 0) over cells
    double overshoot = 0.0;
};

inline LocalEnergy local_energy(const LocalModel& model, const ScalarField& c) {
    LocalEnergy e;
    e.gradient_part = model.stencil().energy(c);
    e.potential_part = f_lambda_energy(model.potential(), c);
    e.total = e.gradient_part + e.potential_part;
    e.overshoot = std::max(0.0, max_abs(c) - 1.0);
    return e;
}

/// One step of the same minimizing-movement scheme with the local operator.
inline SchemeState local_step(const SchemeState& prev, const LocalModel& model, const SchemeConfig& cfg,
                              const VectorField& w) {
    return step(prev, model.stencil(), model.potential(), cfg, w, model.mobility());
}

inline Trajectory local_simulate(const ScalarField& c0, const VelocitySpec& v, const LocalModel& model,
                                 const SchemeConfig& cfg) {
    return simulate(c0, v, model.stencil(), model.potential(), cfg, model.mobility());
}

} // namespace anisochill
