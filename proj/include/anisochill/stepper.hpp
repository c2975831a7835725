#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "errors.hpp"
#include "fields.hpp"
#include "potential.hpp"

namespace anisochill {

enum class InnerSolver { DescentOnFh, NewtonEl };

inline std::string_view to_string(InnerSolver s) { return s == InnerSolver::NewtonEl ? "NEWTON_EL" : "DESCENT_ON_FH"; }

/// m(c) = 1 or m(c) = 1 + c/2.
enum class MobilityPreset { Constant, Linear };

inline std::string_view to_string(MobilityPreset m) { return m == MobilityPreset::Constant ? "CONSTANT" : "LINEAR"; }

inline ScalarField mobility(MobilityPreset m, const ScalarField& c) {
    ScalarField r(c.grid, 1.0);
    if (m == MobilityPreset::Linear)
        for (std::size_t i = 0; i < c.size(); ++i) r[i] = 1.0 + 0.5 * c[i];
    return r;
}

struct VelocitySpec {
    VelocityPreset preset = VelocityPreset::Zero;
    double amplitude = 1.0;
    double omega = 0.0;
};

struct SchemeConfig {
    double h = 1e-3;
    double T = 1e-2;
    /// (time, lambda) pairs; lambda(t) is the value of the last pair with time <= t.
    std::vector<std::pair<double, double>> lambda_schedule{{0.0, 1e-3}};
    InnerSolver solver = InnerSolver::NewtonEl;
    double newton_tol = 1e-10;  // ||R||_inf
    double descent_tol = 1e-9;  // ||grad F_h||_inf
    int max_inner_iters = 50;   // Newton iterations
    int max_descent_iters = 5000;
    double neumann_tol = 1e-13;
    /// Newton factors the Jacobian densely up to this many cells.
    std::size_t dense_limit = 3000;

    int steps() const { return static_cast<int>(std::llround(T / h)); }

    double lambda_at(double t) const {
        double lam = lambda_schedule.front().second;
        for (const auto& [time, l] : lambda_schedule)
            if (time <= t + 1e-12 * h) lam = l;
        return lam;
    }

    void validate() const {
        if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("scheme.h", "must be positive");
        if (!(T >= h)) throw ValidationError("scheme.T", "must be at least scheme.h");
        if (std::abs(T / h - steps()) > 1e-9 * (T / h)) throw ValidationError("scheme.T", "must be a multiple of scheme.h");
        if (!(newton_tol > 0.0)) throw ValidationError("scheme.newton_tol", "must be positive");
        if (!(descent_tol > 0.0)) throw ValidationError("scheme.descent_tol", "must be positive");
        if (!(neumann_tol > 0.0)) throw ValidationError("scheme.neumann_tol", "must be positive");
        if (max_inner_iters < 1) throw ValidationError("scheme.max_inner_iters", "must be at least 1");
        if (max_descent_iters < 1) throw ValidationError("scheme.max_descent_iters", "must be at least 1");
        if (lambda_schedule.empty()) throw ValidationError("scheme.lambda", "schedule is empty");
        double prev = -std::numeric_limits<double>::infinity();
        for (const auto& [time, l] : lambda_schedule) {
            if (!(time >= prev)) throw ValidationError("scheme.lambda", "schedule times must be nondecreasing");
            if (!(l > 0.0 && l < 1.0)) throw ValidationError("scheme.lambda", "values must lie in (0,1)");
            prev = time;
        }
    }
};

struct StepReport {
    double E_lambda_before = 0.0;
    double E_lambda_after = 0.0;
    double E_nonlocal = 0.0;  // interaction part of E_lambda_after
    double E_potential = 0.0; // sum f_lambda(c) vol at the new state
    double dissipation = 0.0;
    double transport_work = 0.0;
    double inequality_slack = 0.0;
    int inner_iters = 0;
    double residual = 0.0;
    double mass_drift = 0.0;
    double max_abs_c = 0.0;
};

struct SchemeState {
    int k = 0;
    double t = 0.0;
    ScalarField c;
    std::optional<ScalarField> mu; // absent at k = 0
    double m_omega = 0.0;
    StepReport report;
};

/// Checks the hypotheses on c0 (|c0| <= 1 per cell, mean in (-1,1)).
inline SchemeState initial_state(const ScalarField& c0) {
    for (double v : c0.values)
        if (!(std::abs(v) <= 1.0)) throw ValidationError("c0", "values must lie in [-1,1]");
    SchemeState s;
    s.c = c0;
    s.m_omega = mean(c0);
    if (!(std::abs(s.m_omega) < 1.0)) throw ValidationError("c0", "mean must lie in (-1,1)");
    s.report.max_abs_c = max_abs(c0);
    return s;
}

/// Inner iteration hit its cap; carries the best iterate.
class StepFailure : public NumericalError {
public:
    StepFailure(const std::string& what, std::vector<double> history, ScalarField best, double residual)
        : NumericalError(what, std::move(history)), best_(std::move(best)), residual_(residual) {}
    const ScalarField& best() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }

private:
    ScalarField best_;
    double residual_;
};

namespace detail {

/// Data frozen during one step: c_k, m(c_k), div(w_k c_k).
template <class Form>
struct StepProblem {
    const Form& form;
    const PotentialSpec& pot;
    const SchemeConfig& cfg;
    const ScalarField& ck;
    double m_omega;
    ScalarField m;
    ScalarField tdiv;
    double kappa;

    StepProblem(const SchemeState& prev, const Form& f, const PotentialSpec& p, const SchemeConfig& c,
                const VectorField& w, MobilityPreset mob)
        : form(f), pot(p), cfg(c), ck(prev.c), m_omega(prev.m_omega), m(mobility(mob, prev.c)),
          tdiv(transport_divergence(w, prev.c)), kappa(p.kappa()) {
        require_same_grid(f.grid(), prev.c.grid);
    }

    void require_mean(const ScalarField& c) const {
        if (std::abs(mean(c) - m_omega) > 1e-10)
            throw UsageError("candidate violates the mean constraint");
    }

    /// mu_0 with div(m grad mu_0) = (c - c_k)/h + div(w c_k), mean zero.
    ScalarField mu0(const ScalarField& c) const {
        ScalarField rhs(c.grid);
        for (std::size_t i = 0; i < c.size(); ++i) rhs[i] = (c[i] - ck[i]) / cfg.h + tdiv[i];
        return neumann_solve(m, project_mean_zero(rhs), cfg.neumann_tol);
    }

    double value(const ScalarField& c, const ScalarField& mu) const {
        const double vol = c.grid.cell_volume();
        const double pot_part = vol * reduce_sum(c.size(), [&](std::size_t i) {
                                    return f0_lambda(pot, c[i]) - kappa * ck[i] * c[i];
                                });
        return 0.5 * cfg.h * face_dirichlet(m, mu) + form.energy(c) + pot_part;
    }

    /// Lc + g(c) - kappa c_k, the chemical potential up to a constant.
    ScalarField chemical(const ScalarField& c) const {
        ScalarField r = form.apply(c);
        for (std::size_t i = 0; i < c.size(); ++i) r[i] += g_lambda(pot, c[i]) - kappa * ck[i];
        return r;
    }

    ScalarField gradient(const ScalarField& c, const ScalarField& mu) const {
        ScalarField r = chemical(c);
        for (std::size_t i = 0; i < c.size(); ++i) r[i] -= mu[i];
        return project_mean_zero(r);
    }

    /// c - c_k + h div(w c_k) - h div(m grad(Lc + g(c) - kappa c_k))
    ScalarField newton_residual(const ScalarField& c) const {
        const ScalarField flux = neumann_divergence(m, chemical(c));
        ScalarField r(c.grid);
        for (std::size_t i = 0; i < c.size(); ++i) r[i] = c[i] - ck[i] + cfg.h * tdiv[i] - cfg.h * flux[i];
        return r;
    }
};

inline Eigen::Map<const Eigen::VectorXd> as_vector(const ScalarField& u) {
    return {u.values.data(), static_cast<Eigen::Index>(u.size())};
}

template <class Form>
ScalarField solve_newton(const StepProblem<Form>& pb, int& iters, double& residual) {
    const Grid& g = pb.ck.grid;
    const auto n = static_cast<Eigen::Index>(g.size());
    const Eigen::SparseMatrix<double> k = neumann_matrix(pb.m);
    const bool dense = g.size() <= pb.cfg.dense_limit;
    Eigen::MatrixXd l_dense;
    Eigen::SparseMatrix<double> l_sparse;
    if (dense)
        l_dense = pb.form.dense_operator();
    else
        l_sparse = pb.form.sparse_operator();

    ScalarField c = pb.ck;
    ScalarField r = pb.newton_residual(c);
    double rn = max_abs(r);
    std::vector<double> history{rn};
    ScalarField best = c;
    double best_rn = rn;
    double tol = pb.cfg.newton_tol;
    for (int it = 1; it <= pb.cfg.max_inner_iters; ++it) {
        Eigen::VectorXd gp(n);
        for (Eigen::Index i = 0; i < n; ++i) gp(i) = g_lambda_prime(pb.pot, c[static_cast<std::size_t>(i)]);
        Eigen::VectorXd delta;
        const Eigen::VectorXd rhs = -as_vector(r);
        double jac_inf = 0.0;
        if (dense) {
            Eigen::MatrixXd s = l_dense;
            s.diagonal() += gp;
            Eigen::MatrixXd jac = -pb.cfg.h * (k * s);
            jac.diagonal().array() += 1.0;
            jac_inf = jac.cwiseAbs().rowwise().sum().maxCoeff();
            delta = jac.partialPivLu().solve(rhs);
        } else {
            Eigen::SparseMatrix<double> s = l_sparse;
            for (Eigen::Index i = 0; i < n; ++i) s.coeffRef(i, i) += gp(i);
            Eigen::SparseMatrix<double> jac = -pb.cfg.h * (k * s);
            for (Eigen::Index i = 0; i < n; ++i) jac.coeffRef(i, i) += 1.0;
            jac.makeCompressed();
            Eigen::VectorXd rows = Eigen::VectorXd::Zero(n);
            for (Eigen::Index j = 0; j < jac.outerSize(); ++j)
                for (Eigen::SparseMatrix<double>::InnerIterator e(jac, j); e; ++e) rows(e.row()) += std::abs(e.value());
            jac_inf = rows.maxCoeff();
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(jac);
            if (lu.info() != Eigen::Success)
                throw StepFailure("Newton: sparse LU failed", history, best, best_rn);
            delta = lu.solve(rhs);
        }
        ScalarField d(g);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] = delta(static_cast<Eigen::Index>(i));
        d = project_mean_zero(d);

        // R = -h K grad F_h and J = -h K Hess F_h, so d is the Newton step
        // for the convex F_h; backtrack on F_h
        const ScalarField mu = pb.mu0(c);
        const double f = pb.value(c, mu);
        const double slope = inner(pb.gradient(c, mu), d);
        double t = 1.0;
        ScalarField trial(g), tr;
        double tn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < g.size(); ++i) trial[i] = c[i] + t * d[i];
            tr = pb.newton_residual(trial);
            tn = max_abs(tr);
            const double tf = pb.value(trial, pb.mu0(trial));
            const bool armijo = tf <= f + 1e-4 * t * slope;
            const bool flat = tf <= f + 1e-13 * std::max(1.0, std::abs(f)) && tn < rn;
            if (armijo || flat) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        c = trial;
        r = tr;
        rn = tn;
        history.push_back(rn);
        iters = it;
        if (rn < best_rn) {
            best_rn = rn;
            best = c;
        }
        // R carries roundoff of order eps |J|_inf |c|_inf; a tighter tolerance is unreachable
        tol = std::max(pb.cfg.newton_tol,
                       std::numeric_limits<double>::epsilon() * jac_inf * std::max(1.0, max_abs(c)));
        if (rn <= tol) {
            residual = rn;
            return c;
        }
    }
    std::ostringstream os;
    os << "Newton: residual " << best_rn << " above " << tol << " after " << pb.cfg.max_inner_iters
       << " iterations";
    throw StepFailure(os.str(), history, best, best_rn);
}

/// L-BFGS on F_h over the mean-m_omega affine space. The initial inverse
/// Hessian is [(1/h)(-K)^{-1} + beta I]^{-1} with beta the mean diagonal of
/// L + g'(c_k).
template <class Form>
ScalarField solve_descent(const StepProblem<Form>& pb, int& iters, double& residual) {
    const Grid& g = pb.ck.grid;
    const std::size_t n = g.size();
    const double h = pb.cfg.h;
    const Eigen::SparseMatrix<double> k = neumann_matrix(pb.m);

    double beta = 0.0;
    {
        const Eigen::SparseMatrix<double> l = pb.form.sparse_operator();
        for (Eigen::Index i = 0; i < l.rows(); ++i) beta += l.coeff(i, i);
        for (std::size_t i = 0; i < n; ++i) beta += g_lambda_prime(pb.pot, pb.ck[i]);
        beta = std::max(beta / static_cast<double>(n), 0.0);
    }
    Eigen::SparseMatrix<double> mmat = -h * beta * k;
    for (Eigen::Index i = 0; i < mmat.rows(); ++i) mmat.coeffRef(i, i) += 1.0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(mmat);
    if (ldlt.info() != Eigen::Success) throw NumericalError("descent: preconditioner factorization failed");
    auto precondition = [&](const ScalarField& v) {
        const Eigen::VectorXd kv = -h * (k * as_vector(v));
        const Eigen::VectorXd y = ldlt.solve(kv);
        ScalarField r(g);
        for (std::size_t i = 0; i < n; ++i) r[i] = y(static_cast<Eigen::Index>(i));
        return project_mean_zero(r);
    };
    auto dot = [&](const ScalarField& a, const ScalarField& b) {
        return reduce_sum(n, [&](std::size_t i) { return a[i] * b[i]; });
    };

    ScalarField c = pb.ck;
    ScalarField mu = pb.mu0(c);
    double f = pb.value(c, mu);
    ScalarField grad = pb.gradient(c, mu);
    double gn = max_abs(grad);
    std::vector<double> history{gn};
    std::deque<std::pair<ScalarField, ScalarField>> mem; // (s, y)
    const std::size_t depth = 10;
    for (int it = 1; it <= pb.cfg.max_descent_iters; ++it) {
        // two-loop recursion
        ScalarField q = grad;
        std::vector<double> alpha(mem.size());
        for (std::size_t j = mem.size(); j-- > 0;) {
            const auto& [s, y] = mem[j];
            alpha[j] = dot(s, q) / dot(y, s);
            for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[j] * y[i];
        }
        ScalarField d = precondition(q);
        for (std::size_t j = 0; j < mem.size(); ++j) {
            const auto& [s, y] = mem[j];
            const double b = dot(y, d) / dot(y, s);
            for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[j] - b) * s[i];
        }
        for (double& v : d.values) v = -v;
        d = project_mean_zero(d);
        double slope = dot(grad, d);
        if (!(slope < 0.0)) {
            // lost descent: restart from the preconditioned gradient
            mem.clear();
            d = precondition(grad);
            for (double& v : d.values) v = -v;
            slope = dot(grad, d);
        }

        double t = 1.0;
        ScalarField trial(g), tmu, tgrad;
        double tf = 0.0, tgn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = c[i] + t * d[i];
            tmu = pb.mu0(trial);
            tf = pb.value(trial, tmu);
            tgrad = pb.gradient(trial, tmu);
            tgn = max_abs(tgrad);
            const bool armijo = tf <= f + 1e-4 * t * slope;
            // near the minimizer F_h differences drown in round-off; accept on
            // a shrinking gradient instead
            const bool flat = tf <= f + 1e-13 * std::max(1.0, std::abs(f)) && tgn < gn;
            if (armijo || flat) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        ScalarField s(g), y(g);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - c[i];
            y[i] = tgrad[i] - grad[i];
        }
        if (dot(s, y) > 1e-300) {
            mem.emplace_back(std::move(s), std::move(y));
            if (mem.size() > depth) mem.pop_front();
        }
        c = trial;
        mu = tmu;
        f = tf;
        grad = tgrad;
        gn = tgn;
        history.push_back(gn);
        iters = it;
        if (gn <= pb.cfg.descent_tol) {
            residual = gn;
            return c;
        }
    }
    std::ostringstream os;
    os << "descent: gradient " << gn << " above " << pb.cfg.descent_tol << " after " << iters << " iterations";
    throw StepFailure(os.str(), history, c, gn);
}

} // namespace detail

/// F_h(c) = h/2 sum m(c_k)|grad mu_0|^2 vol + E(c) + sum f_{0,lambda}(c) vol - kappa sum c_k c vol.
template <class Form>
double objective(const ScalarField& c, const SchemeState& prev, const Form& form, const PotentialSpec& pot,
                 const SchemeConfig& cfg, const VectorField& w, MobilityPreset mob) {
    const detail::StepProblem<Form> pb(prev, form, pot, cfg, w, mob);
    pb.require_mean(c);
    return pb.value(c, pb.mu0(c));
}

/// L^2 gradient of F_h on the mean-zero tangent space:
/// P_0(-mu_0 + Lc + g_lambda(c) - kappa c_k).
template <class Form>
ScalarField objective_gradient(const ScalarField& c, const SchemeState& prev, const Form& form,
                               const PotentialSpec& pot, const SchemeConfig& cfg, const VectorField& w,
                               MobilityPreset mob) {
    const detail::StepProblem<Form> pb(prev, form, pot, cfg, w, mob);
    pb.require_mean(c);
    return pb.gradient(c, pb.mu0(c));
}

/// E(c) + sum f_lambda(c) vol.
template <class Form>
double total_energy(const Form& form, const PotentialSpec& pot, const ScalarField& c) {
    return form.energy(c) + f_lambda_energy(pot, c);
}

/// One minimizing-movement step c_k -> c_{k+1}.
template <class Form>
SchemeState step(const SchemeState& prev, const Form& form, const PotentialSpec& pot, const SchemeConfig& cfg,
                 const VectorField& w, MobilityPreset mob) {
    pot.validate();
    const detail::StepProblem<Form> pb(prev, form, pot, cfg, w, mob);
    SchemeState next;
    next.k = prev.k + 1;
    next.t = prev.t + cfg.h;
    next.m_omega = prev.m_omega;
    StepReport& rep = next.report;
    next.c = cfg.solver == InnerSolver::NewtonEl ? detail::solve_newton(pb, rep.inner_iters, rep.residual)
                                                 : detail::solve_descent(pb, rep.inner_iters, rep.residual);
    const ScalarField& c = next.c;
    ScalarField mu = pb.mu0(c);
    double shift = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) shift += g_lambda(pot, c[i]) - pb.kappa * prev.c[i];
    shift /= static_cast<double>(c.size());
    for (double& v : mu.values) v += shift;

    rep.E_lambda_before = total_energy(form, pot, prev.c);
    rep.E_nonlocal = form.energy(c);
    rep.E_potential = f_lambda_energy(pot, c);
    rep.E_lambda_after = rep.E_nonlocal + rep.E_potential;
    rep.dissipation = cfg.h * face_dirichlet(pb.m, mu);
    rep.transport_work = -cfg.h * inner(pb.tdiv, mu);
    rep.inequality_slack = rep.E_lambda_before + rep.transport_work - rep.E_lambda_after - rep.dissipation;
    rep.mass_drift = std::abs(mean(c) - prev.m_omega);
    rep.max_abs_c = max_abs(c);
    next.mu = std::move(mu);
    return next;
}

struct Trajectory {
    std::vector<SchemeState> states;
    bool complete = true;
    std::string failure;
};

/// Runs T/h steps from c0 with w_k the interval average of the velocity and
/// lambda taken from the schedule at the start of each step. A failing step
/// ends the run; the partial trajectory is returned.
template <class Form>
Trajectory simulate(const ScalarField& c0, const VelocitySpec& v, const Form& form, PotentialSpec pot,
                    const SchemeConfig& cfg, MobilityPreset mob) {
    cfg.validate();
    Trajectory tr;
    tr.states.push_back(initial_state(c0));
    pot.lambda = cfg.lambda_at(0.0);
    tr.states.back().report.E_potential = f_lambda_energy(pot, c0);
    tr.states.back().report.E_nonlocal = form.energy(c0);
    tr.states.back().report.E_lambda_after = tr.states.back().report.E_potential + tr.states.back().report.E_nonlocal;
    for (int k = 0; k < cfg.steps(); ++k) {
        const SchemeState& prev = tr.states.back();
        pot.lambda = cfg.lambda_at(prev.t);
        const VectorField w = interval_average(c0.grid, v.preset, prev.t, cfg.h, v.amplitude, v.omega);
        try {
            tr.states.push_back(step(prev, form, pot, cfg, w, mob));
        } catch (const NumericalError& e) {
            tr.complete = false;
            std::ostringstream os;
            os << "step " << k + 1 << ": " << e.what();
            tr.failure = os.str();
            break;
        }
    }
    return tr;
}

struct NProbe {
    ScalarField nf;
    double ratio = 0.0;
    /// 1/min m, the bound ||grad N f|| <= ||f||_{-1} / min m.
    double bound = 0.0;
};

/// N(c) f solves -div(m(c) grad u) = f with mean zero; ratio is
/// ||grad N f||_2 / ||f||_{-1}.
inline NProbe n_operator_probe(const ScalarField& c, const ScalarField& f, MobilityPreset mob, double tol = 1e-12) {
    const ScalarField m = mobility(mob, c);
    NProbe p;
    double mmin = std::numeric_limits<double>::infinity();
    for (double v : m.values) mmin = std::min(mmin, v);
    p.bound = 1.0 / mmin;
    if (max_abs(f) == 0.0) {
        p.nf = ScalarField(f.grid);
        return p;
    }
    p.nf = neumann_solve(m, -1.0 * f, tol);
    p.ratio = std::sqrt(face_dirichlet(ScalarField(f.grid, 1.0), p.nf)) / hminus1_norm(f);
    return p;
}

} // namespace anisochill
