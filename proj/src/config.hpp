#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "anisochill/fields.hpp"
#include "anisochill/kernels.hpp"
#include "anisochill/nonlocal_form.hpp"
#include "anisochill/potential.hpp"
#include "anisochill/stepper.hpp"

namespace anisochill::harness {

enum class Experiment { Moments, Gamma, Simulate, Nl2lSweep, EhrlingProbe };
enum class Model { Nonlocal, Local };
enum class InitialKind { Cos, Noise, File };

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view name);

/// c0 = mean + amplitude cos(mode pi x / L0) [cos(mode pi y / L1)] for COS,
/// mean + mean-zero uniform noise in [-amplitude, amplitude] for NOISE.
struct InitialSpec {
    InitialKind kind = InitialKind::Cos;
    double mean = 0.0;
    double amplitude = 0.1;
    int mode = 2;
    std::string file;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Simulate;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    KernelParams kernel;
    Grid grid = Grid::line(128);
    PotentialSpec potential;
    SchemeConfig scheme;
    MobilityPreset mobility = MobilityPreset::Constant;
    int snapshot_every = 10;
    VelocitySpec velocity;
    AssemblyOptions nonlocal;

    std::vector<double> eps_list;
    Model model = Model::Nonlocal;
    /// Row-major local coefficient matrix; empty means the kernel limit matrix.
    std::vector<double> local_a;
    std::vector<double> limit_eps{0.2, 0.1, 0.05, 0.025};
    InitialSpec initial;

    double gamma_liminf_tol = 0.05;
    double gamma_liminf_eps = 0.1;

    double ehrling_delta0 = 0.1;
    int ehrling_samples = 200;
    int ehrling_modes = 16;

    KernelSpec kernel_spec() const { return KernelSpec(kernel); }
    void validate() const;
};

/// Documented key list: key -> one-line description.
const std::map<std::string, std::string>& config_keys();

/// Reads flat `key = value` lines (`#` starts a comment). Unknown keys and
/// malformed values raise ValidationError naming the key.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

/// Every resolved setting as key -> value text, defaults included.
std::map<std::string, std::string> echo(const ExperimentConfig& cfg);
/// FNV-1a 64 over the sorted echo.
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(std::uint64_t h);

/// Anisotropy for the local model: local.A if given, else the limit of the
/// kernel family along limit.eps_list.
Eigen::MatrixXd local_matrix(const ExperimentConfig& cfg);

ScalarField initial_field(const ExperimentConfig& cfg);

} // namespace anisochill::harness
