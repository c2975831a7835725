#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/program_options.hpp>

namespace anisochill::harness {

namespace po = boost::program_options;

namespace {

template <class E>
using Names = std::vector<std::pair<std::string_view, E>>;

const Names<Experiment> experiment_names{{"MOMENTS", Experiment::Moments},
                                         {"GAMMA", Experiment::Gamma},
                                         {"SIMULATE", Experiment::Simulate},
                                         {"NL2L_SWEEP", Experiment::Nl2lSweep},
                                         {"EHRLING_PROBE", Experiment::EhrlingProbe}};
const Names<KernelFamily> family_names{{"SCALED_SINGULAR", KernelFamily::ScaledSingular},
                                       {"BBM_OVER_R2", KernelFamily::BbmOverR2},
                                       {"AFFINE_TRANSFORMED", KernelFamily::AffineTransformed}};
const Names<Mollifier> mollifier_names{{"UNIFORM_SHELL", Mollifier::UniformShell},
                                       {"TRIANGULAR", Mollifier::Triangular}};
const Names<KappaConvention> kappa_names{{"theta_c", KappaConvention::ThetaC}, {"inf_fpp", KappaConvention::InfFpp}};
const Names<InnerSolver> solver_names{{"NEWTON_EL", InnerSolver::NewtonEl}, {"DESCENT_ON_FH", InnerSolver::DescentOnFh}};
const Names<MobilityPreset> mobility_names{{"CONSTANT", MobilityPreset::Constant}, {"LINEAR", MobilityPreset::Linear}};
const Names<VelocityPreset> velocity_names{{"ZERO", VelocityPreset::Zero}, {"VORTEX", VelocityPreset::Vortex}};
const Names<PairQuadrature> quadrature_names{{"MOMENT_CONSISTENT", PairQuadrature::MomentConsistent},
                                             {"MIDPOINT", PairQuadrature::Midpoint}};
const Names<Model> model_names{{"NONLOCAL", Model::Nonlocal}, {"LOCAL", Model::Local}};
const Names<InitialKind> initial_names{{"COS", InitialKind::Cos}, {"NOISE", InitialKind::Noise}, {"FILE", InitialKind::File}};

template <class E>
E parse_enum(const std::string& key, const std::string& v, const Names<E>& names) {
    for (const auto& [name, e] : names)
        if (boost::iequals(name, v)) return e;
    std::string allowed;
    for (const auto& [name, e] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    throw ValidationError(key, "unknown value '" + v + "' (expected one of " + allowed + ")");
}

template <class E>
std::string enum_name(E e, const Names<E>& names) {
    for (const auto& [name, v] : names)
        if (v == e) return std::string(name);
    return "?";
}

double parse_double(const std::string& key, const std::string& v) {
    const std::string t = boost::trim_copy(v);
    double x = 0.0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty())
        throw ValidationError(key, "expected a number, got '" + v + "'");
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    const std::string t = boost::trim_copy(v);
    long long x = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty())
        throw ValidationError(key, "expected an integer, got '" + v + "'");
    return x;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    const std::string t = boost::trim_copy(v);
    if (t.empty()) return parts;
    boost::split(parts, t, boost::is_any_of(", \t"), boost::token_compress_on);
    return parts;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
    return out;
}

std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + fmt_double(x);
    return s;
}

} // namespace

std::string_view to_string(Experiment e) {
    for (const auto& [name, v] : experiment_names)
        if (v == e) return name;
    return "?";
}

Experiment parse_experiment(std::string_view name) {
    return parse_enum("experiment", std::string(name), experiment_names);
}

const std::map<std::string, std::string>& config_keys() {
    static const std::map<std::string, std::string> keys{
        {"experiment", "MOMENTS | GAMMA | SIMULATE | NL2L_SWEEP | EHRLING_PROBE"},
        {"seed", "seed for random fields"},
        {"output_dir", "directory for CSVs and the manifest"},
        {"kernel.family", "SCALED_SINGULAR | BBM_OVER_R2 | AFFINE_TRANSFORMED"},
        {"kernel.base_family", "radial family used by AFFINE_TRANSFORMED"},
        {"kernel.alpha", "order of SCALED_SINGULAR, in (0,2)"},
        {"kernel.epsilon", "kernel scale for SIMULATE and EHRLING_PROBE"},
        {"kernel.mollifier", "UNIFORM_SHELL | TRIANGULAR (BBM profile)"},
        {"kernel.transform", "row-major dim x dim matrix B for AFFINE_TRANSFORMED"},
        {"kernel.moment_radius", "truncation radius of the second moments"},
        {"grid.dim", "1 or 2"},
        {"grid.n", "cells per axis: n or n0,n1"},
        {"grid.length", "domain side lengths: L or L0,L1"},
        {"potential.theta", "temperature theta > 0"},
        {"potential.theta_c", "critical temperature theta_c > 0"},
        {"potential.lambda", "regularization lambda in (0,1)"},
        {"potential.kappa_convention", "theta_c | inf_fpp"},
        {"scheme.h", "time step"},
        {"scheme.T", "final time, a multiple of scheme.h"},
        {"scheme.lambda_schedule", "time:lambda pairs; overrides potential.lambda"},
        {"scheme.solver", "NEWTON_EL | DESCENT_ON_FH"},
        {"scheme.newton_tol", "Newton residual tolerance (inf-norm)"},
        {"scheme.descent_tol", "descent gradient tolerance (inf-norm)"},
        {"scheme.max_inner_iters", "Newton iteration cap"},
        {"scheme.max_descent_iters", "descent iteration cap"},
        {"scheme.neumann_tol", "relative tolerance of the Neumann solves"},
        {"scheme.mobility", "CONSTANT (m = 1) | LINEAR (m = 1 + c/2)"},
        {"scheme.snapshot_every", "steps between sweep error snapshots"},
        {"velocity", "ZERO | VORTEX"},
        {"velocity.amplitude", "vortex amplitude"},
        {"velocity.omega", "vortex modulation cos(omega t)"},
        {"nonlocal.cutoff", "pair cutoff radius; <= 0 means the grid diameter"},
        {"nonlocal.quadrature", "MOMENT_CONSISTENT | MIDPOINT"},
        {"nonlocal.max_pairs", "pair budget"},
        {"eps_list", "strictly decreasing epsilon values"},
        {"model", "NONLOCAL | LOCAL (SIMULATE)"},
        {"local.A", "row-major coefficient matrix of the local model; default: kernel limit"},
        {"limit.eps_list", "epsilons used to extrapolate the limit matrix"},
        {"initial.kind", "COS | NOISE | FILE"},
        {"initial.mean", "mean of c0"},
        {"initial.amplitude", "amplitude of c0 about its mean"},
        {"initial.mode", "cosine mode number"},
        {"initial.file", "field CSV for FILE"},
        {"gamma.liminf_tol", "relative slack of the liminf check"},
        {"gamma.liminf_eps", "liminf check applies for epsilon <= this"},
        {"ehrling.delta0", "delta_0 > 0"},
        {"ehrling.samples", "number of random fields (>= 100)"},
        {"ehrling.modes", "cosine modes per random field"},
    };
    return keys;
}

ExperimentConfig parse_config(std::istream& is) {
    po::options_description desc;
    for (const auto& [key, help] : config_keys()) desc.add_options()(key.c_str(), po::value<std::string>(), help.c_str());
    po::variables_map vm;
    try {
        po::store(po::parse_config_file(is, desc, false), vm);
    } catch (const po::error_with_option_name& e) {
        std::string key = e.get_option_name();
        if (boost::starts_with(key, "--")) key = key.substr(2);
        throw ValidationError(key.empty() ? "config" : key, e.what());
    } catch (const po::error& e) {
        throw ValidationError("config", e.what());
    }
    auto get = [&](const char* key) -> std::optional<std::string> {
        if (!vm.count(key)) return std::nullopt;
        return boost::trim_copy(vm[key].as<std::string>());
    };

    ExperimentConfig c;
    if (auto v = get("experiment")) c.experiment = parse_experiment(*v);
    if (auto v = get("seed")) {
        const long long s = parse_int("seed", *v);
        if (s < 0) throw ValidationError("seed", "must be nonnegative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (auto v = get("output_dir")) c.output_dir = *v;

    int dim = 1;
    if (auto v = get("grid.dim")) dim = static_cast<int>(parse_int("grid.dim", *v));
    if (dim != 1 && dim != 2) throw ValidationError("grid.dim", "must be 1 or 2");
    std::array<int, 2> n{128, 128};
    std::array<double, 2> len{1.0, 1.0};
    if (auto v = get("grid.n")) {
        auto parts = split_list(*v);
        if (parts.empty() || parts.size() > 2) throw ValidationError("grid.n", "expected n or n0,n1");
        n[0] = static_cast<int>(parse_int("grid.n", parts[0]));
        n[1] = parts.size() == 2 ? static_cast<int>(parse_int("grid.n", parts[1])) : n[0];
    }
    if (auto v = get("grid.length")) {
        auto parts = parse_doubles("grid.length", *v);
        if (parts.empty() || parts.size() > 2) throw ValidationError("grid.length", "expected L or L0,L1");
        len[0] = parts[0];
        len[1] = parts.size() == 2 ? parts[1] : parts[0];
    }
    c.grid = Grid(dim, n, len);

    c.kernel.dim = dim;
    if (auto v = get("kernel.family")) c.kernel.family = parse_enum("kernel.family", *v, family_names);
    if (auto v = get("kernel.base_family")) c.kernel.base_family = parse_enum("kernel.base_family", *v, family_names);
    if (auto v = get("kernel.alpha")) c.kernel.alpha = parse_double("kernel.alpha", *v);
    if (auto v = get("kernel.epsilon")) c.kernel.epsilon = parse_double("kernel.epsilon", *v);
    if (auto v = get("kernel.mollifier")) c.kernel.mollifier = parse_enum("kernel.mollifier", *v, mollifier_names);
    if (auto v = get("kernel.transform")) c.kernel.transform = parse_doubles("kernel.transform", *v);
    if (auto v = get("kernel.moment_radius")) c.kernel.moment_radius = parse_double("kernel.moment_radius", *v);

    if (auto v = get("potential.theta")) c.potential.theta = parse_double("potential.theta", *v);
    if (auto v = get("potential.theta_c")) c.potential.theta_c = parse_double("potential.theta_c", *v);
    if (auto v = get("potential.lambda")) c.potential.lambda = parse_double("potential.lambda", *v);
    if (auto v = get("potential.kappa_convention"))
        c.potential.kappa_convention = parse_enum("potential.kappa_convention", *v, kappa_names);

    if (auto v = get("scheme.h")) c.scheme.h = parse_double("scheme.h", *v);
    if (auto v = get("scheme.T")) c.scheme.T = parse_double("scheme.T", *v);
    c.scheme.lambda_schedule = {{0.0, c.potential.lambda}};
    if (auto v = get("scheme.lambda_schedule")) {
        c.scheme.lambda_schedule.clear();
        for (const auto& item : split_list(*v)) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ValidationError("scheme.lambda_schedule", "expected time:lambda pairs");
            c.scheme.lambda_schedule.emplace_back(parse_double("scheme.lambda_schedule", item.substr(0, colon)),
                                                  parse_double("scheme.lambda_schedule", item.substr(colon + 1)));
        }
        if (c.scheme.lambda_schedule.empty()) throw ValidationError("scheme.lambda_schedule", "is empty");
    }
    if (auto v = get("scheme.solver")) c.scheme.solver = parse_enum("scheme.solver", *v, solver_names);
    if (auto v = get("scheme.newton_tol")) c.scheme.newton_tol = parse_double("scheme.newton_tol", *v);
    if (auto v = get("scheme.descent_tol")) c.scheme.descent_tol = parse_double("scheme.descent_tol", *v);
    if (auto v = get("scheme.max_inner_iters"))
        c.scheme.max_inner_iters = static_cast<int>(parse_int("scheme.max_inner_iters", *v));
    if (auto v = get("scheme.max_descent_iters"))
        c.scheme.max_descent_iters = static_cast<int>(parse_int("scheme.max_descent_iters", *v));
    if (auto v = get("scheme.neumann_tol")) c.scheme.neumann_tol = parse_double("scheme.neumann_tol", *v);
    if (auto v = get("scheme.mobility")) c.mobility = parse_enum("scheme.mobility", *v, mobility_names);
    if (auto v = get("scheme.snapshot_every"))
        c.snapshot_every = static_cast<int>(parse_int("scheme.snapshot_every", *v));

    if (auto v = get("velocity")) c.velocity.preset = parse_enum("velocity", *v, velocity_names);
    if (auto v = get("velocity.amplitude")) c.velocity.amplitude = parse_double("velocity.amplitude", *v);
    if (auto v = get("velocity.omega")) c.velocity.omega = parse_double("velocity.omega", *v);

    if (auto v = get("nonlocal.cutoff")) c.nonlocal.cutoff = parse_double("nonlocal.cutoff", *v);
    if (auto v = get("nonlocal.quadrature")) c.nonlocal.quadrature = parse_enum("nonlocal.quadrature", *v, quadrature_names);
    if (auto v = get("nonlocal.max_pairs")) {
        const long long m = parse_int("nonlocal.max_pairs", *v);
        if (m <= 0) throw ValidationError("nonlocal.max_pairs", "must be positive");
        c.nonlocal.max_pairs = static_cast<std::size_t>(m);
    }

    if (auto v = get("eps_list")) c.eps_list = parse_doubles("eps_list", *v);
    if (auto v = get("model")) c.model = parse_enum("model", *v, model_names);
    if (auto v = get("local.A")) c.local_a = parse_doubles("local.A", *v);
    if (auto v = get("limit.eps_list")) c.limit_eps = parse_doubles("limit.eps_list", *v);

    if (auto v = get("initial.kind")) c.initial.kind = parse_enum("initial.kind", *v, initial_names);
    if (auto v = get("initial.mean")) c.initial.mean = parse_double("initial.mean", *v);
    if (auto v = get("initial.amplitude")) c.initial.amplitude = parse_double("initial.amplitude", *v);
    if (auto v = get("initial.mode")) c.initial.mode = static_cast<int>(parse_int("initial.mode", *v));
    if (auto v = get("initial.file")) c.initial.file = *v;

    if (auto v = get("gamma.liminf_tol")) c.gamma_liminf_tol = parse_double("gamma.liminf_tol", *v);
    if (auto v = get("gamma.liminf_eps")) c.gamma_liminf_eps = parse_double("gamma.liminf_eps", *v);

    if (auto v = get("ehrling.delta0")) c.ehrling_delta0 = parse_double("ehrling.delta0", *v);
    if (auto v = get("ehrling.samples")) c.ehrling_samples = static_cast<int>(parse_int("ehrling.samples", *v));
    if (auto v = get("ehrling.modes")) c.ehrling_modes = static_cast<int>(parse_int("ehrling.modes", *v));

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("config", "cannot read " + path);
    return parse_config(is);
}

void ExperimentConfig::validate() const {
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0)) throw ValidationError("eps_list", "entries must be positive");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ValidationError("eps_list", "must be strictly decreasing");
    }
    const KernelSpec spec = kernel_spec();
    for (double e : eps_list) (void)spec.with_epsilon(e);
    if (spec.dim() != grid.dim()) throw ValidationError("kernel.dim", "must match grid.dim");
    potential.validate();
    scheme.validate();
    if (snapshot_every < 1) throw ValidationError("scheme.snapshot_every", "must be at least 1");
    if (velocity.preset == VelocityPreset::Vortex && grid.dim() != 2)
        throw ValidationError("velocity", "VORTEX needs grid.dim = 2");
    if (!std::isfinite(velocity.amplitude)) throw ValidationError("velocity.amplitude", "must be finite");
    if (!local_a.empty() && local_a.size() != static_cast<std::size_t>(grid.dim() * grid.dim()))
        throw ValidationError("local.A", "needs dim*dim row-major entries");
    for (std::size_t i = 1; i < limit_eps.size(); ++i)
        if (!(limit_eps[i] < limit_eps[i - 1])) throw ValidationError("limit.eps_list", "must be strictly decreasing");
    if (!(std::abs(initial.mean) < 1.0)) throw ValidationError("initial.mean", "must lie in (-1,1)");
    if (initial.kind != InitialKind::File && !(std::abs(initial.mean) + std::abs(initial.amplitude) <= 1.0))
        throw ValidationError("initial.amplitude", "|mean| + |amplitude| must not exceed 1");
    if (initial.kind == InitialKind::File && initial.file.empty())
        throw ValidationError("initial.file", "required for initial.kind = FILE");
    if (!(gamma_liminf_tol >= 0.0)) throw ValidationError("gamma.liminf_tol", "must be nonnegative");
    if (!(ehrling_delta0 > 0.0)) throw ValidationError("ehrling.delta0", "must be positive");
    if (ehrling_samples < 100) throw ValidationError("ehrling.samples", "must be at least 100");
    if (ehrling_modes < 1) throw ValidationError("ehrling.modes", "must be at least 1");

    const bool needs_eps = experiment == Experiment::Moments || experiment == Experiment::Gamma ||
                           experiment == Experiment::Nl2lSweep;
    if (needs_eps && eps_list.empty()) throw ValidationError("eps_list", "required for this experiment");
}

std::map<std::string, std::string> echo(const ExperimentConfig& c) {
    std::map<std::string, std::string> m;
    m["experiment"] = std::string(to_string(c.experiment));
    m["seed"] = std::to_string(c.seed);
    m["output_dir"] = c.output_dir;
    m["kernel.family"] = std::string(anisochill::to_string(c.kernel.family));
    m["kernel.base_family"] = std::string(anisochill::to_string(c.kernel.base_family));
    m["kernel.alpha"] = fmt_double(c.kernel.alpha);
    m["kernel.epsilon"] = fmt_double(c.kernel.epsilon);
    m["kernel.mollifier"] = std::string(anisochill::to_string(c.kernel.mollifier));
    m["kernel.transform"] = fmt_list(c.kernel.transform);
    m["kernel.moment_radius"] = fmt_double(c.kernel.moment_radius);
    m["grid.dim"] = std::to_string(c.grid.dim());
    m["grid.n"] = std::to_string(c.grid.n(0)) + (c.grid.dim() == 2 ? "," + std::to_string(c.grid.n(1)) : "");
    m["grid.length"] = fmt_double(c.grid.length(0)) + (c.grid.dim() == 2 ? "," + fmt_double(c.grid.length(1)) : "");
    m["potential.theta"] = fmt_double(c.potential.theta);
    m["potential.theta_c"] = fmt_double(c.potential.theta_c);
    m["potential.lambda"] = fmt_double(c.potential.lambda);
    m["potential.kappa_convention"] = enum_name(c.potential.kappa_convention, kappa_names);
    m["scheme.h"] = fmt_double(c.scheme.h);
    m["scheme.T"] = fmt_double(c.scheme.T);
    std::string sched;
    for (const auto& [t, l] : c.scheme.lambda_schedule) sched += (sched.empty() ? "" : ",") + fmt_double(t) + ":" + fmt_double(l);
    m["scheme.lambda_schedule"] = sched;
    m["scheme.solver"] = enum_name(c.scheme.solver, solver_names);
    m["scheme.newton_tol"] = fmt_double(c.scheme.newton_tol);
    m["scheme.descent_tol"] = fmt_double(c.scheme.descent_tol);
    m["scheme.max_inner_iters"] = std::to_string(c.scheme.max_inner_iters);
    m["scheme.max_descent_iters"] = std::to_string(c.scheme.max_descent_iters);
    m["scheme.neumann_tol"] = fmt_double(c.scheme.neumann_tol);
    m["scheme.mobility"] = enum_name(c.mobility, mobility_names);
    m["scheme.snapshot_every"] = std::to_string(c.snapshot_every);
    m["velocity"] = enum_name(c.velocity.preset, velocity_names);
    m["velocity.amplitude"] = fmt_double(c.velocity.amplitude);
    m["velocity.omega"] = fmt_double(c.velocity.omega);
    m["nonlocal.cutoff"] = fmt_double(c.nonlocal.cutoff);
    m["nonlocal.quadrature"] = enum_name(c.nonlocal.quadrature, quadrature_names);
    m["nonlocal.max_pairs"] = std::to_string(c.nonlocal.max_pairs);
    m["eps_list"] = fmt_list(c.eps_list);
    m["model"] = enum_name(c.model, model_names);
    m["local.A"] = fmt_list(c.local_a);
    m["limit.eps_list"] = fmt_list(c.limit_eps);
    m["initial.kind"] = enum_name(c.initial.kind, initial_names);
    m["initial.mean"] = fmt_double(c.initial.mean);
    m["initial.amplitude"] = fmt_double(c.initial.amplitude);
    m["initial.mode"] = std::to_string(c.initial.mode);
    m["initial.file"] = c.initial.file;
    m["gamma.liminf_tol"] = fmt_double(c.gamma_liminf_tol);
    m["gamma.liminf_eps"] = fmt_double(c.gamma_liminf_eps);
    m["ehrling.delta0"] = fmt_double(c.ehrling_delta0);
    m["ehrling.samples"] = std::to_string(c.ehrling_samples);
    m["ehrling.modes"] = std::to_string(c.ehrling_modes);
    return m;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::string_view s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : echo(cfg)) {
        if (k == "output_dir") continue;
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Eigen::MatrixXd local_matrix(const ExperimentConfig& cfg) {
    const int d = cfg.grid.dim();
    if (!cfg.local_a.empty()) {
        Eigen::MatrixXd a(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) a(r, c) = cfg.local_a[static_cast<std::size_t>(r * d + c)];
        return a;
    }
    return limit_matrix(cfg.kernel_spec(), cfg.limit_eps).anisotropy;
}

ScalarField initial_field(const ExperimentConfig& cfg) {
    const Grid& g = cfg.grid;
    const InitialSpec& s = cfg.initial;
    if (s.kind == InitialKind::File) {
        ScalarField c = load_field(s.file);
        if (!(c.grid == g)) throw ValidationError("initial.file", "grid does not match grid.*");
        for (double v : c.values)
            if (!(std::abs(v) <= 1.0)) throw ValidationError("initial.file", "values must lie in [-1,1]");
        return c;
    }
    if (s.kind == InitialKind::Cos) {
        const double k = s.mode * std::numbers::pi;
        const double l0 = g.length(0), l1 = g.length(1);
        const bool two = g.dim() == 2;
        return ScalarField::sample(g, [&](double x, double y) {
            return s.mean + s.amplitude * std::cos(k * x / l0) * (two ? std::cos(k * y / l1) : 1.0);
        });
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ScalarField noise(g);
    for (double& v : noise.values) v = u(rng);
    noise = project_mean_zero(noise);
    const double scale = max_abs(noise) > 0.0 ? s.amplitude / max_abs(noise) : 0.0;
    ScalarField c(g);
    for (std::size_t i = 0; i < g.size(); ++i) c[i] = s.mean + scale * noise[i];
    return c;
}

} // namespace anisochill::harness
