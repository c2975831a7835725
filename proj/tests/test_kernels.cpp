#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "anisochill/kernels.hpp"
#include "oracles.hpp"

using namespace anisochill;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Oracles below use plain composite rules or closed forms and share no code
// with the quadrature module.

double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double singular_constant_oracle(int d, double alpha) {
    const double sphere = d == 1 ? 2.0 : 2.0 * std::numbers::pi;
    return alpha * (2.0 - alpha) / (2.0 * sphere);
}

// |S^{d-1}|/d \int_0^eps eta(r) r^{d-1} dr for a mollifier profile eta.
double bbm_moment_oracle(int d, double eps, bool triangular) {
    const double cd = d == 1 ? 2.0 : std::numbers::pi;
    const double sphere = d == 1 ? 2.0 : 2.0 * std::numbers::pi;
    auto eta = [&](double r) {
        const double base = (2.0 / cd) * d * std::pow(eps, -d);
        return triangular ? base * (d + 1) * (1.0 - r / eps) : base;
    };
    return sphere / d * simpson([&](double r) { return eta(r) * std::pow(r, d - 1); }, 0.0, eps);
}

KernelParams bbm(int d, double eps, Mollifier m = Mollifier::UniformShell) {
    KernelParams p;
    p.family = KernelFamily::BbmOverR2;
    p.dim = d;
    p.epsilon = eps;
    p.mollifier = m;
    return p;
}

KernelParams sheared(double eps) {
    KernelParams p = bbm(2, eps);
    p.family = KernelFamily::AffineTransformed;
    p.base_family = KernelFamily::BbmOverR2;
    p.transform = {1.0, 0.5, 0.0, 1.0};
    return p;
}

} // namespace

TEST_CASE("singular family evaluates its piecewise formula") {
    KernelParams p;
    p.family = KernelFamily::ScaledSingular;
    p.dim = 1;
    p.alpha = 0.5;
    p.epsilon = 1.0;
    const KernelSpec k(p);
    REQUIRE_THAT(k.scale_constant(), WithinRel(singular_constant_oracle(1, 0.5), 1e-10));
    const double z[1] = {2.0};
    REQUIRE_THAT(k(z), WithinRel(k.scale_constant() * std::pow(2.0, -1.5), 1e-14));

    p.epsilon = 0.2;
    p.dim = 2;
    p.alpha = 1.3;
    const KernelSpec k2(p);
    REQUIRE_THAT(k2.scale_constant(), WithinRel(singular_constant_oracle(2, 1.3), 1e-9));
    const double inner[2] = {0.1, 0.0}, mid[2] = {0.0, 0.5};
    const double c = k2.scale_constant();
    REQUIRE_THAT(k2(inner), WithinRel(c * std::pow(0.2, -0.7) * std::pow(0.1, -3.3), 1e-13));
    REQUIRE_THAT(k2(mid), WithinRel(c * std::pow(0.2, 1.3) * std::pow(0.5, -5.3), 1e-13));
}

TEST_CASE("kernel is even and nonnegative and singular at the origin") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::vector<KernelSpec> specs{KernelSpec(bbm(2, 0.3)), KernelSpec(sheared(0.3)),
                                  KernelSpec(bbm(1, 0.3, Mollifier::Triangular))};
    KernelParams s;
    s.family = KernelFamily::ScaledSingular;
    s.dim = 2;
    s.epsilon = 0.1;
    specs.emplace_back(s);
    for (const auto& k : specs) {
        for (int i = 0; i < 500; ++i) {
            const double z[2] = {u(rng), u(rng)}, mz[2] = {-z[0], -z[1]};
            const std::span<const double> a(z, k.dim()), b(mz, k.dim());
            REQUIRE(k(a) == k(b));
            REQUIRE(k(a) >= 0.0);
        }
        const double zero[2] = {0.0, 0.0};
        REQUIRE_THROWS_AS(k(std::span<const double>(zero, k.dim())), DomainError);
    }
}

TEST_CASE("affine family evaluates the base kernel at Bz") {
    const KernelSpec k(sheared(0.4));
    const KernelSpec base(bbm(2, 0.4));
    const double z[2] = {0.1, 0.2};
    const double bz[2] = {0.1 + 0.5 * 0.2, 0.2};
    REQUIRE_THAT(k(z), WithinRel(base(bz), 1e-14));
}

TEST_CASE("spec validation") {
    KernelParams p = bbm(3, 0.1);
    REQUIRE_THROWS_AS(KernelSpec(p), ValidationError);
    p = bbm(1, -0.1);
    REQUIRE_THROWS_AS(KernelSpec(p), ValidationError);
    p = sheared(0.1);
    p.transform = {1.0, 2.0, 0.5, 1.0};
    REQUIRE_THROWS_AS(KernelSpec(p), ValidationError);
    KernelParams s;
    s.family = KernelFamily::ScaledSingular;
    s.alpha = 2.0;
    REQUIRE_THROWS_AS(KernelSpec(s), ValidationError);
}

TEST_CASE("BBM second moment matches the radial oracle") {
    for (int d : {1, 2}) {
        for (bool tri : {false, true}) {
            const KernelSpec k(bbm(d, 0.2, tri ? Mollifier::Triangular : Mollifier::UniformShell));
            const auto rep = second_moment(k);
            const double a = bbm_moment_oracle(d, 0.2, tri);
            for (int i = 0; i < d; ++i) REQUIRE_THAT(rep.second_moment(i, i), WithinRel(a, 1e-6));
            if (d == 2) {
                REQUIRE(std::abs(rep.second_moment(0, 1)) <= 1e-10 * rep.second_moment(0, 0));
            }
            REQUIRE_THAT(rep.normalization_check, WithinRel(1.0, 1e-6));
            REQUIRE(rep.near_origin_mass >= 0.0);
        }
    }
}

TEST_CASE("sheared second moment matches the change of variables") {
    for (double eps : {0.4, 0.1}) {
        const auto rep = second_moment(KernelSpec(sheared(eps)));
        const Eigen::Matrix2d brute = oracle::sheared_moment_oracle(eps);
        // closed form: |det B|^{-1} B^{-1} (2 I) B^{-T}
        Eigen::Matrix2d b;
        b << 1.0, 0.5, 0.0, 1.0;
        const Eigen::Matrix2d closed = 2.0 * b.inverse() * b.inverse().transpose();
        const Eigen::Matrix2d m = rep.second_moment;
        REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * m.cwiseAbs().maxCoeff());
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                REQUIRE_THAT(m(i, j), WithinRel(brute(i, j), 1e-6));
                REQUIRE_THAT(m(i, j), WithinRel(closed(i, j), 1e-6));
            }
    }
}

TEST_CASE("singular second moment matches the closed form") {
    KernelParams p;
    p.family = KernelFamily::ScaledSingular;
    p.dim = 1;
    p.alpha = 0.7;
    for (double eps : {0.4, 0.05}) {
        p.epsilon = eps;
        const auto rep = second_moment(KernelSpec(p));
        const double c = singular_constant_oracle(1, 0.7);
        const double a = 2.0 * c * (1.0 / 1.3 + (1.0 - std::pow(eps, 0.7)) / 0.7);
        REQUIRE_THAT(rep.second_moment(0, 0), WithinRel(a, 1e-8));
        REQUIRE_THAT(rep.normalization_check, WithinRel(1.0, 1e-6));
        for (std::size_t i = 1; i < rep.tail_mass.size(); ++i)
            REQUIRE(rep.tail_mass[i] <= rep.tail_mass[i - 1]);
    }
}

TEST_CASE("limit matrix of isotropic and sheared families") {
    const std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    const auto iso = limit_matrix(KernelSpec(bbm(2, 0.4)), eps);
    const double a = iso.anisotropy(0, 0);
    REQUIRE_THAT(a, WithinRel(1.0, 1e-8));
    REQUIRE(std::abs(iso.anisotropy(0, 1)) < 1e-10 * a);
    REQUIRE((iso.max_eigenvalue - iso.min_eigenvalue) <= 1e-8 * iso.max_eigenvalue);
    REQUIRE(iso.min_eigenvalue > 0.0);

    const auto sh = limit_matrix(KernelSpec(sheared(0.4)), eps);
    const Eigen::Matrix2d expected = 0.5 * oracle::sheared_moment_oracle(0.05);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE_THAT(sh.anisotropy(i, j), WithinRel(expected(i, j), 1e-6));
    REQUIRE(sh.anisotropy(0, 1) != 0.0);
    REQUIRE(sh.anisotropy(0, 1) == sh.anisotropy(1, 0));
    REQUIRE(sh.min_eigenvalue > 0.0);
}

TEST_CASE("limit matrix extrapolates a first-order family") {
    // SCALED_SINGULAR with alpha = 1: a(eps) = 4c(1 + (1 - eps)) in d = 1, linear in eps
    KernelParams p;
    p.family = KernelFamily::ScaledSingular;
    p.dim = 1;
    p.alpha = 1.0;
    const auto rep = limit_matrix(KernelSpec(p), {0.4, 0.2, 0.1, 0.05});
    REQUIRE(rep.extrapolated);
    REQUIRE_THAT(rep.moment_limit(0, 0), WithinRel(1.0, 1e-8));
    REQUIRE_THAT(rep.anisotropy(0, 0), WithinRel(0.5, 1e-8));
    for (std::size_t i = 1; i < rep.successive_diffs.size(); ++i)
        REQUIRE(rep.successive_diffs[i] < rep.successive_diffs[i - 1]);
}

TEST_CASE("limit matrix rejects bad eps lists") {
    const KernelSpec k(bbm(1, 0.4));
    REQUIRE_THROWS_AS(limit_matrix(k, {0.4, 0.2}), ValidationError);
    REQUIRE_THROWS_AS(limit_matrix(k, {0.4, 0.4, 0.1}), ValidationError);
}

TEST_CASE("assumption diagnostics") {
    const auto rep = check_assumptions(KernelSpec(bbm(2, 0.4)), {0.1});
    REQUIRE(rep.even);
    REQUIRE(rep.nonnegative);
    REQUIRE_THAT(rep.normalization, WithinRel(1.0, 1e-6));
    REQUIRE(rep.tail[0].size() == 4);
    // 2D uniform shell: tail(delta) = (4/pi) eps^{-2} 2 pi log(eps/delta) / C_0 for delta < eps
    const double c0 = 2.0 * std::numbers::pi * 2.0 / std::numbers::pi;
    for (int j = 0; j < 2; ++j) {
        const double eps = rep.epsilons[j];
        REQUIRE_THAT(rep.tail[0][j], WithinRel(8.0 / (eps * eps) * std::log(eps / 0.1) / c0, 1e-9));
    }
    REQUIRE(rep.tail[0][2] == 0.0);
    REQUIRE(rep.tail[0][3] == 0.0);
    REQUIRE_FALSE(rep.tails_decreasing);
    REQUIRE(rep.tails_decreasing_below_delta);

    KernelParams s;
    s.family = KernelFamily::ScaledSingular;
    s.dim = 1;
    s.epsilon = 0.2;
    const auto srep = check_assumptions(KernelSpec(s), {0.1, 0.5});
    REQUIRE_THAT(srep.normalization, WithinRel(1.0, 1e-6));
    REQUIRE(srep.tails_decreasing_below_delta);
    REQUIRE_FALSE(srep.tails_decreasing);
    // beyond every epsilon the tail scales like eps^alpha
    const auto& far = srep.tail[1];
    for (std::size_t j = 1; j < far.size(); ++j)
        REQUIRE_THAT(far[j] / far[j - 1], WithinRel(std::pow(srep.epsilons[j] / srep.epsilons[j - 1], 0.5), 1e-8));
}
