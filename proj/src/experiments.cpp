#include "experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <boost/version.hpp>
#include <json.hpp>

#include "anisochill/local_ref.hpp"
#include "anisochill/parallel.hpp"

namespace anisochill::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// CSV text starting with the config hash comment.
class Csv {
public:
    Csv(const ExperimentConfig& cfg, const std::string& header) {
        os_ << "# config_hash=" << hash_hex(config_hash(cfg)) << "\n";
        header_ = header;
    }
    void comment(const std::string& s) { comments_ += "# " + s + "\n"; }
    template <class... T>
    void row(const T&... cells) {
        std::string line;
        ((line += (line.empty() ? "" : ",") + cell(cells)), ...);
        body_ += line + "\n";
    }
    Table table(const std::string& name) const { return {name, os_.str() + comments_ + header_ + "\n" + body_}; }

private:
    static std::string cell(double x) { return num(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }

    std::ostringstream os_;
    std::string header_;
    std::string comments_;
    std::string body_;
};

Check make_check(std::string name, bool ok, std::string detail = {}) { return {std::move(name), ok, std::move(detail)}; }

double slack_tol(double e) { return 1e-8 * std::max(1.0, std::abs(e)); }

/// Per-step energy inequality, mass and (for w = 0) monotone energy.
void audit_trajectory(const Trajectory& tr, bool nonincreasing, std::vector<Check>& checks,
                             const std::string& prefix) {
    int bad_slack = 0, bad_energy = 0;
    double worst_drift = 0.0;
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
        const auto& r = tr.states[k].report;
        if (r.inequality_slack < -slack_tol(r.E_lambda_before)) ++bad_slack;
        if (nonincreasing && r.E_lambda_after > r.E_lambda_before + slack_tol(r.E_lambda_before)) ++bad_energy;
        worst_drift = std::max(worst_drift, r.mass_drift);
    }
    checks.push_back(make_check(prefix + "energy_inequality", bad_slack == 0,
                                std::to_string(bad_slack) + " steps below -1e-8 max(1,E)"));
    checks.push_back(make_check(prefix + "mass_conservation", worst_drift <= 1e-12, "max drift " + num(worst_drift)));
    if (nonincreasing)
        checks.push_back(make_check(prefix + "energy_nonincreasing", bad_energy == 0,
                                    std::to_string(bad_energy) + " increasing steps"));
}

std::string matrix_header(int d) { return d == 1 ? "a11" : "a11,a12,a21,a22"; }

std::string matrix_cells(const Eigen::MatrixXd& m) {
    std::string s;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) s += (s.empty() ? "" : ",") + num(m(r, c));
    return s;
}

} // namespace

std::vector<std::pair<std::string, ScalarField>> gamma_fields(const Grid& g, std::uint64_t seed) {
    const double pi = std::numbers::pi;
    const double l0 = g.length(0), l1 = g.length(1);
    std::vector<std::pair<std::string, ScalarField>> out;
    out.emplace_back("constant", ScalarField(g, 0.3));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    if (g.dim() == 1) {
        out.emplace_back("linear", ScalarField::sample(g, [&](double x, double) { return x / l0; }));
        out.emplace_back("cos", ScalarField::sample(g, [&](double x, double) { return std::cos(pi * x / l0); }));
        std::vector<double> a(8);
        for (double& v : a) v = normal(rng);
        out.emplace_back("random", ScalarField::sample(g, [&](double x, double) {
                             double s = 0.0;
                             for (std::size_t k = 0; k < a.size(); ++k)
                                 s += a[k] * std::cos((k + 1) * pi * x / l0) / std::pow(k + 2.0, 2);
                             return s;
                         }));
    } else {
        out.emplace_back("linear", ScalarField::sample(g, [&](double x, double y) { return x / l0 + 0.5 * y / l1; }));
        out.emplace_back("cos", ScalarField::sample(g, [&](double x, double y) {
                             return std::cos(pi * x / l0) * std::cos(pi * y / l1);
                         }));
        out.emplace_back("cos_x", ScalarField::sample(g, [&](double x, double) { return std::cos(pi * x / l0); }));
        std::vector<double> a(25);
        for (double& v : a) v = normal(rng);
        out.emplace_back("random", ScalarField::sample(g, [&](double x, double y) {
                             double s = 0.0;
                             for (int j = 0; j < 5; ++j)
                                 for (int k = 0; k < 5; ++k) {
                                     if (j == 0 && k == 0) continue;
                                     s += a[static_cast<std::size_t>(5 * j + k)] * std::cos(j * pi * x / l0) *
                                          std::cos(k * pi * y / l1) / std::pow(2.0 + j + k, 2);
                                 }
                             return s;
                         }));
    }
    return out;
}

std::vector<ScalarField> random_fields(const Grid& g, std::uint64_t seed, int count, int modes) {
    const double pi = std::numbers::pi;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<ScalarField> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        ScalarField u(g);
        if (g.dim() == 1) {
            for (int k = 1; k <= modes; ++k) {
                const double a = normal(rng) / (static_cast<double>(k) * k);
                for (std::size_t i = 0; i < g.size(); ++i) u[i] += a * std::cos(k * pi * g.center(i, 0) / g.length(0));
            }
        } else {
            for (int j = 0; j <= modes; ++j)
                for (int k = 0; k <= modes; ++k) {
                    if (j == 0 && k == 0) continue;
                    const double a = normal(rng) / std::pow(static_cast<double>(j + k), 2);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        u[i] += a * std::cos(j * pi * g.center(i, 0) / g.length(0)) *
                                std::cos(k * pi * g.center(i, 1) / g.length(1));
                }
        }
        out.push_back(project_mean_zero(u));
    }
    return out;
}

ExperimentResult run_moments(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const auto t0 = Clock::now();
    const KernelSpec family = cfg.kernel_spec();
    const int d = family.dim();
    Csv csv(cfg, "epsilon," + matrix_header(d) + ",near_origin_mass,normalization_check,successive_diff");
    std::vector<Eigen::MatrixXd> moments;
    std::vector<double> diffs;
    double scale = 0.0;
    for (double eps : cfg.eps_list) {
        const MomentReport rep = second_moment(family.with_epsilon(eps));
        double diff = std::numeric_limits<double>::quiet_NaN();
        if (!moments.empty()) {
            diff = (rep.second_moment - moments.back()).cwiseAbs().maxCoeff();
            diffs.push_back(diff);
        }
        moments.push_back(rep.second_moment);
        scale = std::max(scale, rep.second_moment.cwiseAbs().maxCoeff());
        Eigen::MatrixXd shown = rep.second_moment;
        if (d == 1) shown = shown.topLeftCorner(1, 1);
        csv.row(num(eps), matrix_cells(shown), num(rep.near_origin_mass), num(rep.normalization_check), num(diff));
    }
    res.tables.push_back(csv.table("moments.csv"));

    bool cauchy = true;
    const double floor = 1e-10 * scale;
    for (std::size_t i = 1; i < diffs.size(); ++i)
        if (diffs[i] > floor && !(diffs[i] < diffs[i - 1])) cauchy = false;
    res.checks.push_back(make_check("moments_cauchy", cauchy, "successive differences decrease (floor " + num(floor) + ")"));

    if (cauchy && cfg.eps_list.size() >= 3) {
        const LimitReport lim = limit_matrix(family, cfg.eps_list);
        Csv l(cfg, matrix_header(d) + ",min_eigenvalue,max_eigenvalue,rate,extrapolated");
        if (!lim.warning.empty()) l.comment(lim.warning);
        l.row(matrix_cells(lim.anisotropy), num(lim.min_eigenvalue), num(lim.max_eigenvalue), num(lim.rate),
              lim.extrapolated ? 1 : 0);
        res.tables.push_back(l.table("limit.csv"));
        const double asym = (lim.anisotropy - lim.anisotropy.transpose()).cwiseAbs().maxCoeff();
        res.checks.push_back(make_check("limit_symmetric_positive", asym == 0.0 && lim.min_eigenvalue > 0.0,
                                        "min eigenvalue " + num(lim.min_eigenvalue)));
        res.summary.emplace_back("min_eigenvalue", lim.min_eigenvalue);
    }
    res.timings.emplace_back("moments", seconds_since(t0));
    return res;
}

ExperimentResult run_gamma(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const Grid& g = cfg.grid;
    const KernelSpec family = cfg.kernel_spec();
    const auto t0 = Clock::now();
    const Eigen::MatrixXd a = local_matrix(cfg);
    const AnisotropicStencil local(g, a);
    const auto fields = gamma_fields(g, cfg.seed);
    const std::vector<std::pair<std::string, std::string>> pairs{{"cos", "linear"}, {"cos", "random"}, {"linear", "random"}};
    auto field = [&](const std::string& id) -> const ScalarField& {
        for (const auto& [name, u] : fields)
            if (name == id) return u;
        throw UsageError("unknown gamma field " + id);
    };
    res.timings.emplace_back("limit_matrix", seconds_since(t0));

    std::vector<GammaRow> rows;
    std::vector<BilinearRow> brows;
    for (double eps : cfg.eps_list) {
        const auto ta = Clock::now();
        const NonlocalForm form(family.with_epsilon(eps), g, cfg.nonlocal);
        res.timings.emplace_back("assembly_eps_" + num(eps), seconds_since(ta));
        res.summary.emplace_back("pairs_eps_" + num(eps), static_cast<double>(form.pairs().size()));
        for (const auto& [id, u] : fields) {
            GammaRow r{id, eps, form.energy(u), local.energy(u), 0.0};
            r.rel_gap = r.e_0 == 0.0 ? std::abs(r.e_eps) : std::abs(r.e_eps - r.e_0) / r.e_0;
            rows.push_back(r);
        }
        for (const auto& [p, q] : pairs) {
            const ScalarField& u = field(p);
            const ScalarField& v = field(q);
            BilinearRow b;
            b.pair_id = p + "+" + q;
            b.epsilon = eps;
            b.b_eps = form.bilinear(u, v);
            b.b_0 = inner(local.apply(u), v);
            const double eu = form.energy(u), ev = form.energy(v), euv = form.energy(u + v);
            b.b_eps_polarized = euv - eu - ev;
            b.polarization_residual = std::abs(b.b_eps - b.b_eps_polarized) / std::max({euv, eu + ev, 1e-300});
            brows.push_back(b);
        }
    }

    Csv csv(cfg, "field_id,epsilon,E_eps,E_0,rel_gap");
    for (const auto& r : rows) csv.row(r.field_id, num(r.epsilon), num(r.e_eps), num(r.e_0), num(r.rel_gap));
    res.tables.push_back(csv.table("gamma.csv"));
    Csv bcsv(cfg, "pair_id,epsilon,B_eps,B_0,B_eps_polarized,polarization_residual");
    for (const auto& b : brows)
        bcsv.row(b.pair_id, num(b.epsilon), num(b.b_eps), num(b.b_0), num(b.b_eps_polarized), num(b.polarization_residual));
    res.tables.push_back(bcsv.table("gamma_bilinear.csv"));

    for (const auto& [id, u] : fields) {
        std::vector<const GammaRow*> mine;
        for (const auto& r : rows)
            if (r.field_id == id) mine.push_back(&r);
        if (id == "constant") {
            bool zero = true;
            for (const auto* r : mine) zero = zero && r->e_eps == 0.0 && r->e_0 == 0.0;
            res.checks.push_back(make_check("constant_zero", zero));
            continue;
        }
        bool monotone = true, liminf = true;
        for (std::size_t i = 0; i < mine.size(); ++i) {
            if (i > 0 && !(mine[i]->rel_gap < mine[i - 1]->rel_gap)) monotone = false;
            if (mine[i]->epsilon <= cfg.gamma_liminf_eps &&
                !(mine[i]->e_0 <= mine[i]->e_eps + cfg.gamma_liminf_tol * mine[i]->e_0))
                liminf = false;
        }
        res.checks.push_back(make_check("gap_monotone_" + id, monotone, "final rel_gap " + num(mine.back()->rel_gap)));
        res.checks.push_back(make_check("liminf_" + id, liminf));
        res.summary.emplace_back("final_rel_gap_" + id, mine.back()->rel_gap);
    }
    double worst = 0.0;
    for (const auto& b : brows) worst = std::max(worst, b.polarization_residual);
    res.checks.push_back(make_check("polarization", worst <= 1e-10, "max residual " + num(worst)));
    return res;
}

ExperimentResult run_simulate(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ScalarField c0 = initial_field(cfg);
    const auto t0 = Clock::now();
    Trajectory tr;
    const bool local = cfg.model == Model::Local;
    if (local) {
        const LocalModel model(local_matrix(cfg), cfg.potential, cfg.mobility, cfg.grid);
        res.timings.emplace_back("setup", seconds_since(t0));
        tr = local_simulate(c0, cfg.velocity, model, cfg.scheme);
    } else {
        const NonlocalForm form(cfg.kernel_spec(), cfg.grid, cfg.nonlocal);
        res.timings.emplace_back("setup", seconds_since(t0));
        res.summary.emplace_back("pairs", static_cast<double>(form.pairs().size()));
        tr = simulate(c0, cfg.velocity, form, cfg.potential, cfg.scheme, cfg.mobility);
    }
    res.timings.emplace_back("simulate", seconds_since(t0));

    Csv csv(cfg, std::string("t,E_lambda,E_nonlocal_part,E_potential_part,dissipation,transport_work,inequality_slack,"
                             "mass,max_abs_c,inner_iters,residual") +
                     (local ? ",model" : ""));
    if (!tr.complete) csv.comment("partial: " + tr.failure);
    for (const auto& s : tr.states) {
        const auto& r = s.report;
        if (local)
            csv.row(num(s.t), num(r.E_lambda_after), num(r.E_nonlocal), num(r.E_potential), num(r.dissipation),
                    num(r.transport_work), num(r.inequality_slack), num(mean(s.c)), num(r.max_abs_c), r.inner_iters,
                    num(r.residual), "LOCAL");
        else
            csv.row(num(s.t), num(r.E_lambda_after), num(r.E_nonlocal), num(r.E_potential), num(r.dissipation),
                    num(r.transport_work), num(r.inequality_slack), num(mean(s.c)), num(r.max_abs_c), r.inner_iters,
                    num(r.residual));
    }
    res.tables.push_back(csv.table("sim.csv"));
    std::ostringstream field;
    write_field(field, tr.states.back().c);
    res.tables.push_back({"c_final.csv", field.str()});

    audit_trajectory(tr, cfg.velocity.preset == VelocityPreset::Zero, res.checks, "");
    if (!tr.complete) res.failure = tr.failure;
    res.summary.emplace_back("steps", static_cast<double>(tr.states.size() - 1));
    return res;
}

ExperimentResult run_nl2l_sweep(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ScalarField c0 = initial_field(cfg);
    const KernelSpec family = cfg.kernel_spec();
    const std::size_t n_eps = cfg.eps_list.size();
    const auto t0 = Clock::now();
    const Eigen::MatrixXd a = local_matrix(cfg);
    res.timings.emplace_back("limit_matrix", seconds_since(t0));
    res.summary.emplace_back("a11", a(0, 0));

    // members 0..n_eps-1 are the nonlocal runs, member n_eps the local one
    std::vector<Trajectory> runs(n_eps + 1);
    std::vector<double> member_seconds(n_eps + 1, 0.0);
    parallel_for(n_eps + 1, [&](std::size_t m) {
        const auto tm = Clock::now();
        try {
            if (m == n_eps) {
                const LocalModel model(a, cfg.potential, cfg.mobility, cfg.grid);
                runs[m] = local_simulate(c0, cfg.velocity, model, cfg.scheme);
            } else {
                const NonlocalForm form(family.with_epsilon(cfg.eps_list[m]), cfg.grid, cfg.nonlocal);
                runs[m] = simulate(c0, cfg.velocity, form, cfg.potential, cfg.scheme, cfg.mobility);
            }
        } catch (const Error& e) {
            runs[m].complete = false;
            runs[m].failure = e.what();
        }
        member_seconds[m] = seconds_since(tm);
    });
    for (std::size_t m = 0; m <= n_eps; ++m)
        res.timings.emplace_back(m == n_eps ? std::string("local") : "eps_" + num(cfg.eps_list[m]), member_seconds[m]);

    const Trajectory& loc = runs[n_eps];
    const int steps = cfg.scheme.steps();
    auto complete = [&](const Trajectory& t) {
        return t.complete && t.states.size() == static_cast<std::size_t>(steps) + 1;
    };
    Csv csv(cfg, "epsilon,l2_err_T,linf_err_T,energy_gap_T");
    Csv snaps(cfg, "epsilon,t,l2_err");
    std::vector<double> l2;
    bool all_ok = complete(loc);
    if (!complete(loc)) {
        csv.comment("partial: local run failed: " + loc.failure);
        res.failure = "local: " + loc.failure;
    }
    for (std::size_t m = 0; m < n_eps; ++m) {
        const double eps = cfg.eps_list[m];
        const Trajectory& tr = runs[m];
        if (!complete(tr) || !complete(loc)) {
            if (!complete(tr)) {
                csv.comment("partial: eps=" + num(eps) + " failed: " + tr.failure);
                if (res.failure.empty()) res.failure = "eps=" + num(eps) + ": " + tr.failure;
            }
            all_ok = false;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            csv.row(num(eps), num(nan), num(nan), num(nan));
            continue;
        }
        const ScalarField diff = tr.states.back().c - loc.states.back().c;
        const double e = l2_norm(diff);
        l2.push_back(e);
        csv.row(num(eps), num(e), num(max_abs(diff)),
                num(tr.states.back().report.E_lambda_after - loc.states.back().report.E_lambda_after));
        double sup = 0.0;
        for (int k = 0; k <= steps; k += cfg.snapshot_every) {
            const double ek = l2_norm(tr.states[static_cast<std::size_t>(k)].c - loc.states[static_cast<std::size_t>(k)].c);
            sup = std::max(sup, ek);
            snaps.row(num(eps), num(tr.states[static_cast<std::size_t>(k)].t), num(ek));
        }
        if (steps % cfg.snapshot_every != 0) {
            sup = std::max(sup, e);
            snaps.row(num(eps), num(tr.states.back().t), num(e));
        }
        res.summary.emplace_back("l2_err_sup_eps_" + num(eps), sup);
    }
    res.tables.push_back(csv.table("sweep.csv"));
    res.tables.push_back(snaps.table("sweep_snapshots.csv"));

    if (all_ok && n_eps >= 2) {
        bool monotone = true;
        for (std::size_t i = 1; i < l2.size(); ++i) monotone = monotone && l2[i] < l2[i - 1];
        std::string detail;
        for (double e : l2) detail += (detail.empty() ? "" : " > ") + num(e);
        res.checks.push_back(make_check("l2_error_decreasing", monotone, detail));
    }
    return res;
}

ExperimentResult run_ehrling(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const Grid& g = cfg.grid;
    const KernelSpec family = cfg.kernel_spec();
    const auto t0 = Clock::now();
    const int n = cfg.ehrling_samples;
    const int half = n / 2;
    const NonlocalForm form(family, g, cfg.nonlocal);
    const auto samples = random_fields(g, cfg.seed, n, cfg.ehrling_modes);
    auto energy = [&](const ScalarField& u) { return form.energy(u); };
    const std::vector<ScalarField> first(samples.begin(), samples.begin() + half);

    Csv csv(cfg, "delta0,C_fit,n_samples");
    const double d0 = cfg.ehrling_delta0;
    double c_half = 0.0, c_full = 0.0, c_double = 0.0;
    for (double delta : {d0, 2.0 * d0}) {
        const double ch = fit_ehrling(first, delta, energy);
        const double cf = fit_ehrling(samples, delta, energy);
        csv.row(num(delta), num(ch), half);
        csv.row(num(delta), num(cf), n);
        if (delta == d0) {
            c_half = ch;
            c_full = cf;
        } else {
            c_double = cf;
        }
    }
    res.tables.push_back(csv.table("ehrling.csv"));
    const double spread = c_full > 0.0 ? (c_full - c_half) / c_full : 0.0;
    res.checks.push_back(make_check("ehrling_finite", std::isfinite(c_full) && std::isfinite(c_double)));
    res.checks.push_back(make_check("ehrling_stable", spread < 0.2,
                                    std::to_string(half) + " vs " + std::to_string(n) + " samples differ by " + num(spread)));
    res.checks.push_back(make_check("ehrling_delta_monotone", c_double <= c_full,
                                    "C(2 delta0) " + num(c_double) + ", C(delta0) " + num(c_full)));
    res.summary.emplace_back("C_fit", c_full);
    res.timings.emplace_back("single_form", seconds_since(t0));

    if (!cfg.eps_list.empty()) {
        const auto t1 = Clock::now();
        std::vector<NonlocalForm> forms;
        for (double eps : cfg.eps_list) forms.emplace_back(family.with_epsilon(eps), g, cfg.nonlocal);
        const auto phi1 = random_fields(g, cfg.seed + 1, n, cfg.ehrling_modes);
        const auto phi2 = random_fields(g, cfg.seed + 2, n, cfg.ehrling_modes);
        Csv pairs(cfg, "delta,eps1,eps2,C_delta,n_samples");
        bool finite = true;
        for (std::size_t i = 0; i < forms.size(); ++i)
            for (std::size_t j = i; j < forms.size(); ++j) {
                double c = 0.0;
                for (int s = 0; s < n; ++s) {
                    const auto& u = phi1[static_cast<std::size_t>(s)];
                    const auto& v = phi2[static_cast<std::size_t>(s)];
                    const ScalarField d = u - v;
                    const double neg = hminus1_norm(d);
                    if (neg == 0.0) continue;
                    const double e = forms[i].energy(u) + forms[j].energy(v);
                    c = std::max(c, (inner(d, d) - d0 * e) / (neg * neg));
                }
                finite = finite && std::isfinite(c);
                pairs.row(num(d0), num(cfg.eps_list[i]), num(cfg.eps_list[j]), num(c), n);
            }
        res.tables.push_back(pairs.table("ehrling_pairs.csv"));
        res.checks.push_back(make_check("ehrling_pairs_finite", finite));
        res.timings.emplace_back("pairs", seconds_since(t1));
    }
    return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    switch (cfg.experiment) {
    case Experiment::Moments: return run_moments(cfg);
    case Experiment::Gamma: return run_gamma(cfg);
    case Experiment::Simulate: return run_simulate(cfg);
    case Experiment::Nl2lSweep: return run_nl2l_sweep(cfg);
    case Experiment::EhrlingProbe: return run_ehrling(cfg);
    }
    throw UsageError("unknown experiment");
}

int exit_status(const ExperimentResult& r) {
    if (!r.failure.empty()) return 3;
    for (const auto& c : r.checks)
        if (!c.ok) return 4;
    return 0;
}

RunOutcome run(const ExperimentConfig& cfg, int threads) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    set_thread_count(threads);
    RunOutcome out;
    const auto t0 = Clock::now();
    json manifest;
    manifest["experiment"] = std::string(to_string(cfg.experiment));
    manifest["config"] = echo(cfg);
    manifest["config_hash"] = hash_hex(config_hash(cfg));
    manifest["seed"] = cfg.seed;
    manifest["threads"] = threads;
    manifest["versions"] = {{"anisochill", ANISOCHILL_VERSION},
                            {"compiler", __VERSION__},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                          "." + std::to_string(EIGEN_MINOR_VERSION)},
                            {"boost", BOOST_LIB_VERSION}};

    ExperimentResult res;
    try {
        res = run_experiment(cfg);
        out.exit_code = exit_status(res);
        out.message = res.failure;
    } catch (const Error& e) {
        out.exit_code = e.exit_code();
        out.message = e.what();
    }
    out.checks = res.checks;

    fs::create_directories(cfg.output_dir);
    for (const auto& t : res.tables) {
        const fs::path p = fs::path(cfg.output_dir) / t.name;
        std::ofstream os(p, std::ios::binary);
        if (!os) throw UsageError("cannot write " + p.string());
        os << t.text;
        out.files.push_back(p.string());
    }
    json checks = json::array();
    for (const auto& c : res.checks) checks.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    json timings = json::object();
    for (const auto& [k, v] : res.timings) timings[k] = v;
    timings["total"] = seconds_since(t0);
    json summary = json::object();
    for (const auto& [k, v] : res.summary) summary[k] = v;
    manifest["checks"] = checks;
    manifest["timings_seconds"] = timings;
    manifest["summary"] = summary;
    manifest["files"] = out.files;
    manifest["exit_code"] = out.exit_code;
    manifest["message"] = out.message;
    const fs::path mp = fs::path(cfg.output_dir) / "manifest.json";
    std::ofstream ms(mp);
    ms << manifest.dump(2) << "\n";
    out.files.push_back(mp.string());
    return out;
}

} // namespace anisochill::harness
