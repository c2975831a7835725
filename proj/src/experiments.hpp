#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace anisochill::harness {

/// One run-time convergence/audit assertion. A failed check makes the run
/// exit with status 4.
struct Check {
    std::string name;
    bool ok = true;
    std::string detail;
};

/// Tables are kept as rendered CSV text so that callers can compare them
/// byte for byte.
struct Table {
    std::string name; // file name, e.g. "gamma.csv"
    std::string text;
};

struct ExperimentResult {
    std::vector<Table> tables;
    std::vector<Check> checks;
    /// Nonempty when a member run failed numerically (partial tables kept).
    std::string failure;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<std::pair<std::string, double>> summary;
};

// --- gamma suite ---
struct GammaRow {
    std::string field_id;
    double epsilon = 0.0;
    double e_eps = 0.0;
    double e_0 = 0.0;
    double rel_gap = 0.0;
};
struct BilinearRow {
    std::string pair_id;
    double epsilon = 0.0;
    double b_eps = 0.0;
    double b_0 = 0.0;
    /// E_eps(u+v) - E_eps(u) - E_eps(v)
    double b_eps_polarized = 0.0;
    double polarization_residual = 0.0;
};
/// Field presets of the suite, in order.
std::vector<std::pair<std::string, ScalarField>> gamma_fields(const Grid& g, std::uint64_t seed);

// --- Ehrling probe ---
struct EhrlingRow {
    double delta0 = 0.0;
    double c_fit = 0.0;
    int n_samples = 0;
};
/// Smallest C with |u|^2 <= delta E(u) + C |u|_{-1}^2 for every sample:
/// max over samples of (|u|^2 - delta E(u)) / |u|_{-1}^2, floored at 0.
template <class Energy>
double fit_ehrling(const std::vector<ScalarField>& samples, double delta, Energy&& energy) {
    double c = 0.0;
    for (const auto& u : samples) {
        const double n2 = inner(u, u);
        const double neg = hminus1_norm(u);
        if (neg == 0.0) continue;
        c = std::max(c, (n2 - delta * energy(u)) / (neg * neg));
    }
    return c;
}
/// Seeded random mean-zero cosine series with `modes` modes per axis and
/// coefficients N(0,1)/|k|_1^2.
std::vector<ScalarField> random_fields(const Grid& g, std::uint64_t seed, int count, int modes);

ExperimentResult run_moments(const ExperimentConfig& cfg);
ExperimentResult run_gamma(const ExperimentConfig& cfg);
ExperimentResult run_simulate(const ExperimentConfig& cfg);
ExperimentResult run_nl2l_sweep(const ExperimentConfig& cfg);
ExperimentResult run_ehrling(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Exit status of a finished experiment: 3 on numerical failure, 4 if a
/// check failed, else 0.
int exit_status(const ExperimentResult& r);

/// Runs the experiment with `threads` workers, writes its tables and
/// manifest.json to cfg.output_dir. Library errors become exit codes
/// (2 validation, 3 numerical); the manifest records them.
struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> files;
    std::vector<Check> checks;
    std::string message;
};
RunOutcome run(const ExperimentConfig& cfg, int threads);

} // namespace anisochill::harness
