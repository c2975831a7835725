#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "anisochill/nonlocal_form.hpp"
#include "anisochill/stepper.hpp"

using namespace anisochill;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

KernelSpec bbm(int d, double eps) {
    KernelParams p;
    p.family = KernelFamily::BbmOverR2;
    p.dim = d;
    p.epsilon = eps;
    return KernelSpec(p);
}

KernelSpec singular(int d, double eps) {
    KernelParams p;
    p.family = KernelFamily::ScaledSingular;
    p.dim = d;
    p.epsilon = eps;
    p.alpha = 0.8;
    return KernelSpec(p);
}

PotentialSpec pot(double lambda = 0.01) {
    PotentialSpec p;
    p.theta = 1.0;
    p.theta_c = 2.0;
    p.lambda = lambda;
    return p;
}

SchemeConfig cfg(InnerSolver s = InnerSolver::NewtonEl, double h = 1e-3) {
    SchemeConfig c;
    c.h = h;
    c.T = 10 * h;
    c.solver = s;
    return c;
}

ScalarField random_admissible(const Grid& g, std::uint64_t seed, double amp = 0.8) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    ScalarField c(g);
    for (double& v : c.values) v = u(rng);
    return c;
}

ScalarField random_mean_zero(const Grid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    ScalarField c(g);
    for (double& v : c.values) v = n(rng);
    return project_mean_zero(c);
}

ScalarField axpy(const ScalarField& x, double a, const ScalarField& y) { return x + a * y; }

struct Case {
    NonlocalForm form;
    VectorField w;
    MobilityPreset mob;
};

std::vector<Case> cases() {
    std::vector<Case> out;
    const Grid g1 = Grid::line(32);
    out.push_back({assemble(bbm(1, 0.2), g1), VectorField(g1), MobilityPreset::Constant});
    const Grid g2 = Grid::rect(8, 8);
    out.push_back({assemble(singular(2, 0.3), g2), velocity_field(g2, VelocityPreset::Vortex, 0.0, 2.0),
                   MobilityPreset::Linear});
    return out;
}

} // namespace

TEST_CASE("objective at the previous state") {
    const Grid g = Grid::line(32);
    const auto form = assemble(bbm(1, 0.2), g);
    const auto p = pot();
    const auto ck = random_admissible(g, 1);
    const SchemeState prev = initial_state(ck);
    const double f = objective(ck, prev, form, p, cfg(), VectorField(g), MobilityPreset::Constant);
    double expected = form.energy(ck);
    for (std::size_t i = 0; i < g.size(); ++i)
        expected += (f0_lambda(p, ck[i]) - p.kappa() * ck[i] * ck[i]) * g.cell_volume();
    REQUIRE_THAT(f, WithinRel(expected, 1e-13));

    // the mean constraint
    REQUIRE_THROWS_AS(objective(ck + ScalarField(g, 0.01), prev, form, p, cfg(), VectorField(g),
                                MobilityPreset::Constant),
                      UsageError);
    REQUIRE_THROWS_AS(initial_state(ScalarField(g, 1.2)), ValidationError);
}

TEST_CASE("objective is convex along segments") {
    for (const auto& cs : cases()) {
        const Grid& g = cs.form.grid();
        const SchemeState prev = initial_state(random_admissible(g, 2));
        const auto p = pot();
        for (int s = 0; s < 10; ++s) {
            const auto a = axpy(prev.c, 0.3, random_mean_zero(g, 100 + s));
            const auto b = axpy(prev.c, 0.3, random_mean_zero(g, 200 + s));
            const auto m = 0.5 * (a + b);
            auto obj = [&](const ScalarField& c) { return objective(c, prev, cs.form, p, cfg(), cs.w, cs.mob); };
            REQUIRE(obj(m) <= 0.5 * (obj(a) + obj(b)) + 1e-10);
        }
    }
}

TEST_CASE("objective gradient matches central differences") {
    for (const auto& cs : cases()) {
        const Grid& g = cs.form.grid();
        const SchemeState prev = initial_state(random_admissible(g, 3));
        const auto p = pot(0.05);
        const auto c = axpy(prev.c, 0.05, random_mean_zero(g, 4));
        const auto grad = objective_gradient(c, prev, cs.form, p, cfg(), cs.w, cs.mob);
        REQUIRE(std::abs(mean(grad)) <= 1e-12 * std::max(1.0, max_abs(grad)));
        for (int s = 0; s < 5; ++s) {
            const auto phi = random_mean_zero(g, 50 + s);
            const double d = 1e-5;
            auto obj = [&](const ScalarField& x) { return objective(x, prev, cs.form, p, cfg(), cs.w, cs.mob); };
            const double fd = (obj(axpy(c, d, phi)) - obj(axpy(c, -d, phi))) / (2 * d);
            REQUIRE_THAT(inner(grad, phi), WithinRel(fd, 1e-6));
        }
    }
}

TEST_CASE("uniform states are fixed points") {
    const Grid g = Grid::rect(8, 8);
    const auto form = assemble(singular(2, 0.3), g);
    const auto p = pot();
    for (auto solver : {InnerSolver::NewtonEl, InnerSolver::DescentOnFh}) {
        const SchemeState prev = initial_state(ScalarField(g, -0.3));
        const auto next = step(prev, form, p, cfg(solver), VectorField(g), MobilityPreset::Linear);
        REQUIRE(max_abs(next.c - prev.c) <= 1e-12);
        REQUIRE(next.report.inner_iters >= 1);
        const double mu = g_lambda(p, -0.3) - p.kappa() * -0.3;
        for (double v : next.mu->values) REQUIRE_THAT(v, WithinAbs(mu, 1e-9));
    }
}

TEST_CASE("descent on F_h and Newton on the Euler-Lagrange system agree") {
    for (const auto& cs : cases()) {
        const Grid& g = cs.form.grid();
        const SchemeState prev = initial_state(random_admissible(g, 5));
        const auto p = pot();
        const auto a = step(prev, cs.form, p, cfg(InnerSolver::NewtonEl), cs.w, cs.mob);
        const auto b = step(prev, cs.form, p, cfg(InnerSolver::DescentOnFh), cs.w, cs.mob);
        REQUIRE(max_abs(a.c - b.c) <= 1e-8);
        REQUIRE(max_abs(*a.mu - *b.mu) <= 1e-6 * std::max(1.0, max_abs(*a.mu)));
        // the Newton solution is a critical point of F_h
        const auto grad = objective_gradient(a.c, prev, cs.form, p, cfg(), cs.w, cs.mob);
        REQUIRE(max_abs(grad) <= 1e-7);
        for (const auto* s : {&a, &b}) {
            REQUIRE(s->report.mass_drift <= 1e-12);
            REQUIRE(s->report.dissipation >= 0.0);
            REQUIRE(s->report.inequality_slack >= -1e-8 * std::max(1.0, std::abs(s->report.E_lambda_before)));
        }
    }
    // sparse LU path
    const Grid g = Grid::line(32);
    const auto form = assemble(bbm(1, 0.2), g);
    const SchemeState prev = initial_state(random_admissible(g, 6));
    auto sparse = cfg();
    sparse.dense_limit = 0;
    const auto a = step(prev, form, pot(), cfg(), VectorField(g), MobilityPreset::Linear);
    const auto b = step(prev, form, pot(), sparse, VectorField(g), MobilityPreset::Linear);
    REQUIRE(max_abs(a.c - b.c) <= 1e-12);
}

TEST_CASE("energy decays without transport") {
    const Grid g = Grid::line(64);
    const auto form = assemble(bbm(1, 0.1), g);
    const double m0 = 0.1;
    const auto c0 = ScalarField::sample(g, [&](double x, double) { return m0 + 0.1 * std::cos(2 * pi * x); });
    auto c = cfg(InnerSolver::NewtonEl, 1e-3);
    c.T = 0.05;
    const auto tr = simulate(c0, VelocitySpec{}, form, pot(), c, MobilityPreset::Constant);
    REQUIRE(tr.complete);
    REQUIRE(tr.states.size() == 51);
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
        const auto& r = tr.states[k].report;
        REQUIRE(r.E_lambda_after <= r.E_lambda_before + 1e-8 * std::max(1.0, std::abs(r.E_lambda_before)));
        REQUIRE(r.inequality_slack >= -1e-8 * std::max(1.0, std::abs(r.E_lambda_before)));
        REQUIRE(std::abs(mean(tr.states[k].c) - m0) <= 1e-12);
        REQUIRE_THAT(r.E_lambda_before, WithinRel(tr.states[k - 1].report.E_lambda_after, 1e-12));
    }
}

TEST_CASE("energy inequality with transport") {
    const Grid g = Grid::rect(12, 12);
    const auto form = assemble(bbm(2, 0.3), g);
    const auto c0 = ScalarField::sample(g, [](double x, double y) { return 0.5 * std::tanh(8 * (x - 0.5)) * std::cos(pi * y); });
    auto c = cfg(InnerSolver::NewtonEl, 2e-3);
    c.T = 0.02;
    const auto tr = simulate(c0, VelocitySpec{VelocityPreset::Vortex, 5.0, 3.0}, form, pot(), c, MobilityPreset::Linear);
    REQUIRE(tr.complete);
    bool worked = false;
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
        const auto& r = tr.states[k].report;
        REQUIRE(r.inequality_slack >= -1e-8 * std::max(1.0, std::abs(r.E_lambda_before)));
        REQUIRE(r.mass_drift <= 1e-12);
        worked = worked || std::abs(r.transport_work) > 1e-6;
    }
    REQUIRE(worked);
}

TEST_CASE("smaller lambda overshoots less") {
    const Grid g = Grid::line(64);
    const auto form = assemble(bbm(1, 0.05), g);
    PotentialSpec p = pot();
    p.theta_c = 3.0;
    const auto c0 = ScalarField::sample(g, [](double x, double) { return 0.97 * std::tanh(20 * (x - 0.5)); });
    std::vector<Trajectory> runs;
    for (double lam : {1e-2, 1e-3}) {
        auto c = cfg(InnerSolver::NewtonEl, 1e-3);
        c.T = 0.02;
        c.lambda_schedule = {{0.0, lam}};
        runs.push_back(simulate(c0, VelocitySpec{}, form, p, c, MobilityPreset::Constant));
        INFO(runs.back().failure);
        REQUIRE(runs.back().complete);
    }
    auto overshoot = [](const ScalarField& c) { return std::max(0.0, max_abs(c) - 1.0); };
    double coarse = 0.0;
    for (std::size_t k = 0; k < runs[0].states.size(); ++k) {
        REQUIRE(overshoot(runs[1].states[k].c) <= overshoot(runs[0].states[k].c) + 1e-12);
        coarse = std::max(coarse, overshoot(runs[0].states[k].c));
    }
    REQUIRE(coarse > 0.0);
}

TEST_CASE("lambda schedule and failures") {
    SchemeConfig c;
    c.lambda_schedule = {{0.0, 1e-2}, {0.005, 1e-3}};
    REQUIRE(c.lambda_at(0.0) == 1e-2);
    REQUIRE(c.lambda_at(0.0049) == 1e-2);
    REQUIRE(c.lambda_at(0.005) == 1e-3);
    c.validate();
    auto bad = c;
    bad.T = 0.5 * bad.h;
    REQUIRE_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.lambda_schedule = {{0.0, 1.5}};
    REQUIRE_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.T = 2.5 * bad.h;
    REQUIRE_THROWS_AS(bad.validate(), ValidationError);

    const Grid g = Grid::line(32);
    const auto form = assemble(bbm(1, 0.1), g);
    auto tight = cfg();
    tight.max_inner_iters = 1;
    tight.newton_tol = 1e-15;
    const SchemeState prev = initial_state(random_admissible(g, 7));
    try {
        step(prev, form, pot(), tight, VectorField(g), MobilityPreset::Constant);
        FAIL("expected a step failure");
    } catch (const StepFailure& e) {
        REQUIRE(e.best().size() == g.size());
        REQUIRE(e.residual() > 1e-15);
        REQUIRE(e.history().size() == 2);
    }
    const auto tr = simulate(prev.c, VelocitySpec{}, form, pot(), tight, MobilityPreset::Constant);
    REQUIRE(!tr.complete);
    REQUIRE(tr.states.size() == 1);
}

TEST_CASE("N(c) probe") {
    const Grid g = Grid::rect(16, 16);
    const auto c = random_admissible(g, 8, 1.0);
    const auto zero = n_operator_probe(c, ScalarField(g), MobilityPreset::Linear);
    REQUIRE(zero.ratio == 0.0);
    REQUIRE(max_abs(zero.nf) == 0.0);

    const auto f = random_mean_zero(g, 9);
    const auto unit = n_operator_probe(c, f, MobilityPreset::Constant);
    REQUIRE_THAT(unit.ratio, WithinRel(1.0, 1e-6));
    REQUIRE(unit.bound == 1.0);
    for (std::uint64_t s : {10, 11, 12}) {
        const auto cs = random_admissible(g, s, 1.0);
        const auto pr = n_operator_probe(cs, f, MobilityPreset::Linear);
        const auto m = mobility(MobilityPreset::Linear, cs);
        double mmin = 1e300, mmax = 0.0;
        for (double v : m.values) {
            mmin = std::min(mmin, v);
            mmax = std::max(mmax, v);
        }
        REQUIRE(pr.ratio <= pr.bound * (1.0 + 1e-6));
        REQUIRE(pr.ratio <= mmax / mmin * unit.ratio * (1.0 + 1e-6));
        // -div(m grad Nf) = f
        const auto back = neumann_divergence(m, pr.nf);
        REQUIRE(max_abs(back + f) <= 1e-9 * max_abs(f));
    }
}
