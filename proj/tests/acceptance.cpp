// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "anisochill/local_ref.hpp"
#include "anisochill/nonlocal_form.hpp"
#include "config.hpp"
#include "experiments.hpp"
#include "oracles.hpp"

using namespace anisochill;
namespace h = anisochill::harness;

namespace {

// pinned tolerances
constexpr double gamma_final_gap = 0.05;
constexpr double gamma_seconds = 60.0;
constexpr double isotropic_offdiag = 1e-10;
constexpr double sheared_rel = 1e-6;
constexpr double limit_seconds = 10.0;
constexpr double slack_rel = 1e-8;
constexpr double audit_seconds = 120.0;
constexpr double mass_tol = 1e-12;
constexpr double gradient_rel = 1e-6;
constexpr double solver_agree = 1e-8;
constexpr double sbp_rel = 1e-13;
constexpr double sweep_seconds = 600.0;
constexpr double ehrling_spread = 0.2;

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!o.ok) ++failures;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), s);
    std::fflush(stdout);
}

h::ExperimentConfig config(const std::string& text) {
    std::istringstream is(text);
    return h::parse_config(is);
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const char* audit_scenario = R"(
grid.dim = 1
grid.n = 128
kernel.family = BBM_OVER_R2
kernel.epsilon = 0.1
potential.theta = 1
potential.theta_c = 50
scheme.h = 1e-4
scheme.T = 0.02
velocity = ZERO
initial.kind = COS
initial.amplitude = 0.1
initial.mode = 2
)";

Trajectory audit_run(double lambda) {
    auto cfg = config(std::string(audit_scenario) + "potential.lambda = " + fmt(lambda) + "\n");
    const NonlocalForm form(cfg.kernel_spec(), cfg.grid);
    return simulate(h::initial_field(cfg), cfg.velocity, form, cfg.potential, cfg.scheme, cfg.mobility);
}

KernelSpec kernel(KernelFamily f, int d, double eps, std::vector<double> transform = {},
                  KernelFamily base = KernelFamily::BbmOverR2, double alpha = 0.5) {
    KernelParams p;
    p.family = f;
    p.base_family = base;
    p.dim = d;
    p.epsilon = eps;
    p.alpha = alpha;
    p.transform = std::move(transform);
    return KernelSpec(p);
}

ScalarField uniform_field(const Grid& g, std::uint64_t seed, double amp) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    ScalarField c(g);
    for (double& v : c.values) v = u(rng);
    return c;
}

ScalarField normal_mean_zero(const Grid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    ScalarField c(g);
    for (double& v : c.values) v = n(rng);
    return project_mean_zero(c);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

int main() {
    criterion(1, "energy convergence on cos(pi x)", [] {
        const auto t0 = Clock::now();
        auto cfg = config(R"(
experiment = GAMMA
grid.dim = 1
grid.n = 512
kernel.family = BBM_OVER_R2
eps_list = 0.4, 0.2, 0.1, 0.05
)");
        const auto res = h::run_gamma(cfg);
        const double s = since(t0);
        std::istringstream is(res.tables.front().text);
        std::string line;
        std::vector<double> gaps;
        while (std::getline(is, line))
            if (line.rfind("cos,", 0) == 0) gaps.push_back(std::stod(line.substr(line.rfind(',') + 1)));
        bool ok = gaps.size() == 4 && s < gamma_seconds && gaps.back() < gamma_final_gap;
        std::string d = "rel_gap";
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            if (i > 0 && !(gaps[i] < gaps[i - 1])) ok = false;
            d += " " + fmt(gaps[i]);
        }
        return Outcome{ok, d + ", " + fmt(s) + " s"};
    });

    criterion(2, "limit matrix isotropic and sheared", [] {
        const auto t0 = Clock::now();
        const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
        const auto iso = limit_matrix(kernel(KernelFamily::BbmOverR2, 2, 0.4), eps);
        const double a = iso.anisotropy(0, 0);
        const double off = std::max(std::abs(iso.anisotropy(0, 1)), std::abs(iso.anisotropy(1, 0)));
        bool ok = off < isotropic_offdiag * a && std::abs(iso.anisotropy(1, 1) - a) < isotropic_offdiag * a;
        const auto sh = limit_matrix(kernel(KernelFamily::AffineTransformed, 2, 0.4, {1.0, 0.5, 0.0, 1.0}), eps);
        const Eigen::Matrix2d expected = 0.5 * oracle::sheared_moment_oracle(0.05);
        double rel = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                rel = std::max(rel, std::abs(sh.anisotropy(i, j) - expected(i, j)) / std::abs(expected(i, j)));
        const bool sym = sh.anisotropy(0, 1) == sh.anisotropy(1, 0);
        const double s = since(t0);
        ok = ok && rel <= sheared_rel && sym && sh.min_eigenvalue > 0.0 && s < limit_seconds;
        return Outcome{ok, "isotropic off-diagonal " + fmt(off / a) + "a, sheared max rel error " + fmt(rel) +
                               ", min eigenvalue " + fmt(sh.min_eigenvalue)};
    });

    Trajectory fine;
    double audit_s = 0.0;
    criterion(3, "discrete energy inequality", [&] {
        const auto t0 = Clock::now();
        fine = audit_run(1e-3);
        audit_s = since(t0);
        int bad = 0, up = 0;
        double worst = 0.0;
        for (std::size_t k = 1; k < fine.states.size(); ++k) {
            const auto& r = fine.states[k].report;
            const double tol = slack_rel * std::max(1.0, std::abs(r.E_lambda_before));
            if (r.inequality_slack < -tol) ++bad;
            if (r.E_lambda_after > r.E_lambda_before + tol) ++up;
            worst = std::min(worst, r.inequality_slack / std::max(1.0, std::abs(r.E_lambda_before)));
        }
        const bool ok = fine.complete && fine.states.size() == 201 && bad == 0 && up == 0 && audit_s < audit_seconds;
        return Outcome{ok, std::to_string(fine.states.size() - 1) + " steps, worst scaled slack " + fmt(worst) + ", " +
                               std::to_string(up) + " energy increases"};
    });

    criterion(4, "mass conservation", [&] {
        double worst = 0.0;
        for (const auto& s : fine.states) worst = std::max(worst, std::abs(mean(s.c) - fine.states.front().m_omega));
        return Outcome{!fine.states.empty() && worst <= mass_tol, "max |mean(c_k) - m| " + fmt(worst)};
    });

    criterion(5, "objective gradient vs central differences", [] {
        PotentialSpec p;
        p.lambda = 1e-3;
        SchemeConfig sc;
        sc.h = 1e-3;
        sc.T = 1e-2;
        double worst = 0.0;
        int count = 0;
        struct Setup {
            NonlocalForm form;
            VectorField w;
            MobilityPreset mob;
        };
        const Grid g1 = Grid::line(64), g2 = Grid::rect(8, 8);
        std::vector<Setup> setups;
        setups.push_back({NonlocalForm(kernel(KernelFamily::BbmOverR2, 1, 0.2), g1), VectorField(g1),
                          MobilityPreset::Constant});
        setups.push_back({NonlocalForm(kernel(KernelFamily::ScaledSingular, 2, 0.3, {}, KernelFamily::ScaledSingular, 0.8), g2),
                          velocity_field(g2, VelocityPreset::Vortex, 0.0, 2.0), MobilityPreset::Linear});
        for (const auto& st : setups) {
            const Grid& g = st.form.grid();
            const SchemeState prev = initial_state(uniform_field(g, 3, 0.8));
            const ScalarField c = prev.c + 0.05 * normal_mean_zero(g, 4);
            const auto grad = objective_gradient(c, prev, st.form, p, sc, st.w, st.mob);
            auto obj = [&](const ScalarField& x) { return objective(x, prev, st.form, p, sc, st.w, st.mob); };
            for (int s = 0; s < 20; ++s) {
                const ScalarField phi = normal_mean_zero(g, 100 + static_cast<std::uint64_t>(s));
                const double d = 1e-5;
                const double fd = (obj(c + d * phi) - obj(c + (-d) * phi)) / (2 * d);
                worst = std::max(worst, std::abs(inner(grad, phi) - fd) / std::abs(fd));
                ++count;
            }
        }
        return Outcome{worst <= gradient_rel, std::to_string(count) + " directions, max rel error " + fmt(worst)};
    });

    criterion(6, "solver equivalence and summation by parts", [] {
        const Grid g = Grid::rect(8, 8);
        const KernelSpec k = kernel(KernelFamily::ScaledSingular, 2, 0.3, {}, KernelFamily::ScaledSingular, 0.8);
        const NonlocalForm form(k, g);
        PotentialSpec p;
        p.lambda = 1e-3;
        SchemeConfig newton, descent;
        newton.h = descent.h = 1e-3;
        newton.T = descent.T = 1e-2;
        descent.solver = InnerSolver::DescentOnFh;
        const VectorField w = velocity_field(g, VelocityPreset::Vortex, 0.0, 2.0);
        double worst = 0.0;
        for (int s = 0; s < 10; ++s) {
            const SchemeState prev = initial_state(uniform_field(g, 20 + static_cast<std::uint64_t>(s), 0.8));
            const auto a = step(prev, form, p, newton, w, MobilityPreset::Linear);
            const auto b = step(prev, form, p, descent, w, MobilityPreset::Linear);
            worst = std::max(worst, max_abs(a.c - b.c));
        }
        AssemblyOptions mid;
        mid.quadrature = PairQuadrature::Midpoint;
        const NonlocalForm mform(k, g, mid);
        double sbp = 0.0;
        for (int s = 0; s < 10; ++s) {
            const ScalarField u = normal_mean_zero(g, 40 + static_cast<std::uint64_t>(s));
            const ScalarField v = normal_mean_zero(g, 60 + static_cast<std::uint64_t>(s));
            const oracle::Brute br = oracle::brute_force(k, g, u, v);
            sbp = std::max(sbp, std::abs(inner(mform.apply(u), v) - br.bilinear) / std::abs(br.bilinear));
        }
        return Outcome{worst <= solver_agree && sbp <= sbp_rel,
                       "max |c_newton - c_descent| " + fmt(worst) + ", summation by parts rel " + fmt(sbp)};
    });

    criterion(7, "nonlocal-to-local sweep", [] {
        const auto t0 = Clock::now();
        auto cfg = config(R"(
experiment = NL2L_SWEEP
grid.dim = 1
grid.n = 256
kernel.family = BBM_OVER_R2
eps_list = 0.4, 0.2, 0.1
potential.theta = 1
potential.theta_c = 50
potential.lambda = 1e-3
scheme.h = 1e-4
scheme.T = 0.05
velocity = ZERO
initial.kind = COS
initial.amplitude = 0.1
initial.mode = 2
)");
        const auto res = h::run_nl2l_sweep(cfg);
        const double s = since(t0);
        bool ok = res.failure.empty() && h::exit_status(res) == 0 && s < sweep_seconds;
        std::string d;
        for (const auto& c : res.checks)
            if (c.name == "l2_error_decreasing") d = c.detail;
        if (d.empty()) ok = false;
        return Outcome{ok, "L2 errors " + d + (res.failure.empty() ? "" : ", failure: " + res.failure)};
    });

    criterion(8, "overshoot shrinks with lambda", [&] {
        const Trajectory coarse = audit_run(1e-2);
        bool ok = coarse.complete && fine.complete && coarse.states.size() == fine.states.size();
        double fine_max = 0.0, coarse_max = 0.0;
        int worse = 0;
        for (std::size_t k = 0; ok && k < fine.states.size(); ++k) {
            const double of = std::max(0.0, max_abs(fine.states[k].c) - 1.0);
            const double oc = std::max(0.0, max_abs(coarse.states[k].c) - 1.0);
            if (of > oc) ++worse;
            fine_max = std::max(fine_max, of);
            coarse_max = std::max(coarse_max, oc);
        }
        ok = ok && worse == 0;
        return Outcome{ok, "max overshoot " + fmt(fine_max) + " (lambda 1e-3) vs " + fmt(coarse_max) +
                               " (lambda 1e-2), " + std::to_string(worse) + " slices worse"};
    });

    criterion(9, "Ehrling constant probe", [] {
        auto cfg = config(R"(
experiment = EHRLING_PROBE
grid.dim = 1
grid.n = 128
kernel.family = BBM_OVER_R2
kernel.epsilon = 0.1
ehrling.delta0 = 0.1
ehrling.samples = 200
seed = 11
)");
        const auto res = h::run_ehrling(cfg);
        // rows: delta0,C_fit,n_samples; first two rows are delta0 at half and full counts
        std::vector<double> c;
        std::istringstream is(res.tables.front().text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'd') continue;
            const auto a = line.find(',');
            c.push_back(std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1)));
        }
        if (c.size() < 2) return Outcome{false, "ehrling.csv has " + std::to_string(c.size()) + " rows"};
        const double spread = c[1] > 0.0 ? std::abs(c[1] - c[0]) / c[1] : 0.0;
        const bool ok = std::isfinite(c[0]) && std::isfinite(c[1]) && spread < ehrling_spread;
        return Outcome{ok, "C " + fmt(c[1]) + " (200 samples) vs " + fmt(c[0]) + " (100), spread " + fmt(spread)};
    });

    criterion(10, "determinism across thread counts", [] {
        namespace fs = std::filesystem;
        const fs::path root = fs::temp_directory_path() / ("anisochill_determinism_" + std::to_string(::getpid()));
        fs::remove_all(root);
        const std::vector<std::string> configs{R"(
experiment = NL2L_SWEEP
grid.dim = 2
grid.n = 16
kernel.family = BBM_OVER_R2
eps_list = 0.4, 0.2
potential.theta_c = 50
scheme.h = 1e-4
scheme.T = 2e-3
velocity = VORTEX
velocity.amplitude = 2
initial.mode = 1
)",
                                               R"(
experiment = GAMMA
grid.dim = 2
grid.n = 20
kernel.family = AFFINE_TRANSFORMED
kernel.transform = 1, 0.5, 0, 1
eps_list = 0.4, 0.2
seed = 5
)"};
        int files = 0, differ = 0;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            auto cfg = config(configs[i]);
            std::vector<fs::path> dirs;
            for (int threads : {1, 3}) {
                cfg.output_dir = (root / (std::to_string(i) + "_t" + std::to_string(threads))).string();
                h::run(cfg, threads);
                dirs.emplace_back(cfg.output_dir);
            }
            for (const auto& e : fs::directory_iterator(dirs[0])) {
                if (e.path().extension() != ".csv") continue;
                ++files;
                if (slurp(e.path()) != slurp(dirs[1] / e.path().filename())) ++differ;
            }
        }
        set_thread_count(1);
        fs::remove_all(root);
        return Outcome{files > 0 && differ == 0,
                       std::to_string(files) + " CSVs compared, " + std::to_string(differ) + " differ (threads 1 vs 3)"};
    });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
