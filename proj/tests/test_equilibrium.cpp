#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdelab/equilibrium.hpp"
#include "sdelab/integrators.hpp"
#include "sdelab/objectives.hpp"

using namespace sdelab;

namespace {

// Stats with hand-picked moments and negligible uncertainty, for exercising
// the closed-form identity/closeness/certificate arithmetic.
EquilibriumStats synth(double R, double G, double N, double eta, double lambda,
                       DynamicsKind kind = DynamicsKind::Sgd, double se = 1e-12) {
    EquilibriumStats s;
    s.R = R;
    s.G = G;
    s.N = N;
    s.R_se = se * std::abs(R);
    s.G_se = se * std::abs(G);
    s.N_se = se * std::abs(N);
    s.kind = kind;
    s.eta = eta;
    s.lambda = lambda;
    s.n_samples = 1000;
    s.n_replicas = 8;
    return s;
}

}  // namespace

TEST_CASE("norm identity: exactly balanced stats give zero residual") {
    const double eta = 0.1, lam = 0.01;
    const double G = 1.0, N = 9.0;
    // Solve the discrete balance (2 - eta*lam)*lam*R = eta*(G + N) for R.
    const double R = eta * (G + N) / ((2.0 - eta * lam) * lam);
    const auto rep = check_norm_identity(synth(R, G, N, eta, lam, DynamicsKind::Sgd));
    CHECK(rep.identity_kind == DynamicsKind::Sgd);
    CHECK(rep.residual <= 1e-9);
    CHECK(std::abs(rep.z) < 1e-6);
    CHECK(rep.lhs == doctest::Approx(rep.rhs).epsilon(1e-12));
}

TEST_CASE("norm identity: diffusion-balanced stats leave the gradient term in the discrete identity") {
    const double eta = 0.1, lam = 0.01;
    const double G = 1.0, N = 9.0;
    // Continuous balance 2*lam*R = eta*N.
    const double R = eta * N / (2.0 * lam);
    const auto s = synth(R, G, N, eta, lam, DynamicsKind::Ngd);

    const auto own = check_norm_identity(s);  // defaults to the stats' own kind
    CHECK(own.identity_kind == DynamicsKind::Ngd);
    CHECK(own.residual <= 1e-9);

    // Plugged into the discrete identity the mismatch is the eta*G injection
    // term (up to the (2 - eta*lam)/2 factor on the decay side).
    const auto cross = check_norm_identity(s, DynamicsKind::Sgd);
    const double lhs = (2.0 - eta * lam) * lam * R;
    const double rhs = eta * (G + N);
    CHECK(cross.lhs == doctest::Approx(lhs).epsilon(1e-12));
    CHECK(cross.rhs == doctest::Approx(rhs).epsilon(1e-12));
    const double predicted = std::abs(lhs - rhs) / std::max(lhs, rhs);
    CHECK(cross.residual == doctest::Approx(predicted).epsilon(1e-12));
    // ... which is close to G/(G+N) when eta*lam is small.
    CHECK(cross.residual == doctest::Approx(G / (G + N)).epsilon(0.01));
}

TEST_CASE("norm identity: svag uses h for the gradient term and eta for the noise term") {
    const double eta = 0.4, lam = 0.05;
    const std::uint64_t l = 4;
    const double h = eta / static_cast<double>(l);
    const double G = 2.0, N = 3.0;
    const double R = (h * G + eta * N) / ((2.0 - h * lam) * lam);
    auto s = synth(R, G, N, eta, lam, DynamicsKind::Svag);
    s.svag_l = l;
    const auto rep = check_norm_identity(s);
    CHECK(rep.residual <= 1e-9);
    // Same stats against the plain discrete identity (l = 1) should not balance.
    const auto wrong = check_norm_identity(s, DynamicsKind::Sgd);
    CHECK(wrong.residual > 0.05);
}

TEST_CASE("norm identity: sde2 identity flips the sign of the eta*lambda correction") {
    const double eta = 0.2, lam = 0.1;
    const double G = 1.0, N = 1.0;
    const double R = eta * (G + N) / ((2.0 + eta * lam) * lam);
    const auto rep = check_norm_identity(synth(R, G, N, eta, lam, DynamicsKind::Sde2));
    CHECK(rep.residual <= 1e-9);
    // The discrete identity differs by the 2*eta*lam relative tilt on the decay side.
    const auto cross = check_norm_identity(synth(R, G, N, eta, lam, DynamicsKind::Sde2), DynamicsKind::Sgd);
    CHECK(cross.residual > 0.0);
    CHECK(cross.residual == doctest::Approx(2.0 * eta * lam / (2.0 + eta * lam)).epsilon(1e-6));
}

TEST_CASE("norm identity: zero standard errors give z = 0 only for exact balance") {
    auto s = synth(1.0, 1.0, 1.0, 0.1, 0.01);
    s.R_se = s.G_se = s.N_se = 0.0;
    const auto rep = check_norm_identity(s);
    CHECK(std::isinf(rep.z));  // unbalanced with zero SE: infinitely many sigmas
}

TEST_CASE("c-closeness: identical equilibria achieve C = 1") {
    const double eta = 0.1;
    const auto a = synth(4.0, 2.0, 6.0, eta, 0.01);
    auto b = a;
    const auto v = c_closeness(a, b, eta, std::sqrt(2.0));
    CHECK(v.defined);
    CHECK(v.C_achieved == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.ratio_R == doctest::Approx(1.0));
    CHECK(v.ratio_G == doctest::Approx(1.0));
    CHECK(v.ratio_N == doctest::Approx(1.0));
    CHECK(v.close);
    CHECK(v.threshold == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("c-closeness: a 1.5x ratio in R alone is the achieved C") {
    const double eta = 0.1;
    const auto a = synth(4.0, 2.0, 6.0, eta, 0.01);
    auto b = a;
    b.R = 1.5 * a.R;
    const auto v = c_closeness(a, b, eta, std::sqrt(2.0));
    CHECK(v.C_achieved == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(v.ratio_R == doctest::Approx(1.5));
    CHECK_FALSE(v.close);  // 1.5 > sqrt(2)
}

TEST_CASE("c-closeness: two-sided ratios make the verdict swap-symmetric") {
    const double eta = 0.2;
    auto a = synth(4.0, 2.0, 6.0, eta, 0.01);
    auto b = synth(5.0, 1.8, 7.5, eta, 0.01);
    const auto ab = c_closeness(a, b, eta, 2.0);
    const auto ba = c_closeness(b, a, eta, 2.0);
    CHECK(ab.C_achieved == doctest::Approx(ba.C_achieved).epsilon(1e-12));
    CHECK(ab.close == ba.close);
}

TEST_CASE("c-closeness: noise ratio compares eta-scaled traces") {
    const double eta = 0.1;
    auto a = synth(1.0, 1.0, 10.0, eta, 0.01);
    auto b = synth(1.0, 1.0, 5.0, 2.0 * eta, 0.01);  // SDE side at doubled eta
    // eta * N_a = 1.0 versus b.eta * N_b = 1.0: the N ratio is 1 even though
    // the raw traces differ by 2x.
    const auto v = c_closeness(a, b, eta, 2.0);
    CHECK(v.ratio_N == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("c-closeness: nonpositive components make the verdict undefined") {
    const double eta = 0.1;
    auto a = synth(1.0, 1.0, 1.0, eta, 0.01);
    auto b = a;
    b.G = 0.0;
    const auto v = c_closeness(a, b, eta, 2.0);
    CHECK_FALSE(v.defined);
    CHECK_FALSE(v.close);
    CHECK(v.diagnostic.find("G ratio undefined") != std::string::npos);
}

TEST_CASE("c-closeness: argument validation") {
    const auto a = synth(1.0, 1.0, 1.0, 0.1, 0.01);
    auto b = a;
    CHECK_THROWS_AS(c_closeness(a, b, 0.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(c_closeness(a, b, 0.1, 0.9), std::invalid_argument);
    b.lambda = 0.02;
    CHECK_THROWS_AS(c_closeness(a, b, 0.1, 2.0), std::invalid_argument);
}

TEST_CASE("lsi-closeness: kappa-scaled noise trace restores a matched pair") {
    const double kappa = 8.0;
    auto base = synth(4.0, 2.0, 6.0, 0.1, 0.01);
    auto scaled = base;
    scaled.N = base.N / kappa;  // batch scaling divides the noise trace by kappa
    scaled.eta = base.eta * kappa;
    const auto v = lsi_closeness(base, scaled, kappa, std::sqrt(2.0));
    CHECK(v.defined);
    CHECK(v.C_achieved == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v.close);
}

TEST_CASE("sde failure certificate: low noise-to-signal on the diffusion side certifies") {
    const double C = std::sqrt(2.0);
    // N/G = 0.5 with tiny SE; threshold 1/(C^2-1) = 1.
    const auto sde = synth(1.0, 2.0, 1.0, 1.0, 0.01, DynamicsKind::Sde1);
    const auto cert = sde_failure_certificate(&sde, nullptr, 1.0, C);
    CHECK(cert.threshold == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cert.nsr_sde == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(cert.condition_sde);
    CHECK_FALSE(cert.condition_sgd);
    CHECK(cert.verdict == CertVerdict::FailCertified);
}

TEST_CASE("sde failure certificate: high noise-to-signal is inconclusive, never a pass") {
    const double C = std::sqrt(2.0);
    const auto sgd = synth(1.0, 1.0, 10.0, 0.5, 0.01);  // NSR = 10 >> 1
    const auto cert = sde_failure_certificate(nullptr, &sgd, 0.5, C);
    CHECK(cert.nsr_sgd == doctest::Approx(10.0).epsilon(1e-9));
    CHECK_FALSE(cert.condition_sgd);
    CHECK(cert.verdict == CertVerdict::Inconclusive);
}

TEST_CASE("sde failure certificate: diffusion-side condition rescales by the stats' own eta") {
    const double C = std::sqrt(2.0);
    // NSR = 2 at stats eta = 1; probed at eta = 4 the scaled ratio is 0.5 < 1.
    const auto sde = synth(1.0, 1.0, 2.0, 1.0, 0.01, DynamicsKind::Sde1);
    const auto at_own = sde_failure_certificate(&sde, nullptr, 1.0, C);
    CHECK(at_own.verdict == CertVerdict::Inconclusive);
    const auto at_larger = sde_failure_certificate(&sde, nullptr, 4.0, C);
    CHECK(at_larger.verdict == CertVerdict::FailCertified);
}

TEST_CASE("sde failure certificate: fires monotonically along an eta ramp") {
    const double C = std::sqrt(2.0);
    const auto sde = synth(1.0, 1.0, 2.0, 1.0, 0.01, DynamicsKind::Sde1);
    bool fired_before = false;
    for (double eta : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const bool fired =
            sde_failure_certificate(&sde, nullptr, eta, C).verdict == CertVerdict::FailCertified;
        CHECK((!fired_before || fired));  // once fired, stays fired at larger eta
        fired_before = fired;
    }
    CHECK(fired_before);
}

TEST_CASE("sde failure certificate: argument validation") {
    const auto s = synth(1.0, 1.0, 1.0, 0.1, 0.01);
    CHECK_THROWS_AS(sde_failure_certificate(&s, nullptr, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(sde_failure_certificate(nullptr, nullptr, 0.1, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(sde_failure_certificate(&s, nullptr, 0.0, 2.0), std::invalid_argument);
}

TEST_CASE("sde failure certificate: the 3-SE guard blocks marginal firings") {
    const double C = std::sqrt(2.0);  // threshold 1
    auto sde = synth(1.0, 1.0, 0.95, 1.0, 0.01, DynamicsKind::Sde1);
    sde.N_se = 0.05;  // NSR 0.95 +- ~0.05: 0.95 + 0.15 > 1
    CHECK(sde_failure_certificate(&sde, nullptr, 1.0, C).verdict == CertVerdict::Inconclusive);
    sde.N_se = 1e-9;
    CHECK(sde_failure_certificate(&sde, nullptr, 1.0, C).verdict == CertVerdict::FailCertified);
}

TEST_CASE("lsi failure certificate: kappa = 4 at C = sqrt(2) thresholds at 1/2") {
    const double C = std::sqrt(2.0), kappa = 4.0;
    const auto scaled = synth(1.0, 1.0, 0.3, 0.4, 0.01);
    const auto cert = lsi_failure_certificate(scaled, C, kappa);
    CHECK(cert.threshold == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cert.nsr_scaled == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(cert.verdict == CertVerdict::FailCertified);

    const auto noisy = synth(1.0, 1.0, 0.6, 0.4, 0.01);
    CHECK(lsi_failure_certificate(noisy, C, kappa).verdict == CertVerdict::Inconclusive);
}

TEST_CASE("lsi failure certificate: threshold approaches 1/(C^2-1) as kappa grows") {
    const double C = std::sqrt(2.0);
    const auto s = synth(1.0, 1.0, 0.3, 0.4, 0.01);
    CHECK(lsi_failure_certificate(s, C, 1e12).threshold == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lsi failure certificate: fires monotonically along a kappa ramp") {
    const double C = std::sqrt(2.0);
    const auto s = synth(1.0, 1.0, 0.4, 0.4, 0.01);
    bool fired_before = false;
    for (double kappa : {2.5, 3.0, 4.0, 8.0, 100.0}) {
        const bool fired = lsi_failure_certificate(s, C, kappa).verdict == CertVerdict::FailCertified;
        CHECK((!fired_before || fired));
        fired_before = fired;
    }
    CHECK(fired_before);
}

TEST_CASE("lsi failure certificate: vacuous when C^2 >= kappa") {
    const auto s = synth(1.0, 1.0, 0.3, 0.4, 0.01);
    CHECK_THROWS_AS(lsi_failure_certificate(s, std::sqrt(2.0), 2.0), std::domain_error);
    CHECK_THROWS_AS(lsi_failure_certificate(s, 2.0, 3.0), std::domain_error);
    CHECK_THROWS_AS(lsi_failure_certificate(s, 1.0, 4.0), std::invalid_argument);
}

TEST_CASE("critical-kappa prediction: C^2 (1 + N/G) with its large-NSR shorthand") {
    const double C = std::sqrt(2.0);
    const auto nine = synth(1.0, 1.0, 9.0, 0.1, 0.01);
    const auto p9 = predict_critical_kappa(nine, C);
    CHECK(p9.kappa_star == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(p9.approx == doctest::Approx(18.0).epsilon(1e-9));

    const auto hundred = synth(1.0, 1.0, 100.0, 0.1, 0.01);
    const auto p100 = predict_critical_kappa(hundred, C);
    CHECK(p100.kappa_star == doctest::Approx(202.0).epsilon(1e-9));
    CHECK(p100.approx == doctest::Approx(200.0).epsilon(1e-9));
    // The shorthand under-predicts by exactly C^2.
    CHECK(p100.kappa_star - p100.approx == doctest::Approx(C * C).epsilon(1e-9));
}

TEST_CASE("critical-kappa prediction: unresolved gradient signal is rejected") {
    auto s = synth(1.0, 1.0, 9.0, 0.1, 0.01);
    s.G_se = 1.5;  // G within one SE of zero
    CHECK_THROWS_AS(predict_critical_kappa(s, std::sqrt(2.0)), std::domain_error);
    s.G = 0.0;
    s.G_se = 0.0;
    CHECK_THROWS_AS(predict_critical_kappa(s, std::sqrt(2.0)), std::domain_error);
    CHECK_THROWS_AS(predict_critical_kappa(synth(1, 1, 9, 0.1, 0.01), 1.0), std::invalid_argument);
}

TEST_CASE("cert verdict names are stable spellings") {
    CHECK(std::string(cert_verdict_name(CertVerdict::FailCertified)) == "FAIL-CERTIFIED");
    CHECK(std::string(cert_verdict_name(CertVerdict::Inconclusive)) == "INCONCLUSIVE");
    CHECK(std::string(cert_verdict_name(CertVerdict::NotApplicable)) == "NOT-APPLICABLE");
    CHECK(std::string(cert_verdict_name(CertVerdict::Diverged)) == "DIVERGED");
}

TEST_CASE("estimate_equilibrium: measured discrete run satisfies its own norm balance") {
    RayleighQuotientObjective obj(make_rayleigh_dataset(8, 60, 7, Vec(8, 0.0), 0.5));
    DynamicsConfig cfg;
    cfg.kind = DynamicsKind::Sgd;
    cfg.eta = 0.1;
    cfg.lambda = 0.01;
    cfg.batch = 1.0;
    const Vec x0 = Vec(8, 1.0);
    const auto stats = estimate_equilibrium(obj, cfg, x0, 5000, 5000, 8, "unit/eq-sgd");
    CHECK(stats.n_diverged == 0);
    CHECK(stats.n_replicas == 8);
    CHECK(stats.n_samples > 0);
    CHECK(stats.R > 0.0);
    CHECK(stats.G > 0.0);
    CHECK(stats.N > 0.0);
    CHECK(stats.R_se > 0.0);

    const auto own = check_norm_identity(stats);
    INFO("sgd residual = " << own.residual << ", z = " << own.z);
    CHECK(own.residual < 0.05);

    // The same stats plugged into the continuous balance should miss by about
    // the gradient share of the injected power.
    const auto cross = check_norm_identity(stats, DynamicsKind::Ngd);
    const double grad_share = stats.G / (stats.G + stats.N);
    CHECK(cross.residual == doctest::Approx(grad_share).epsilon(0.35).scale(0.02));
}

TEST_CASE("estimate_equilibrium: thread count never changes the estimate") {
    RayleighQuotientObjective obj(make_rayleigh_dataset(6, 30, 11, Vec(6, 0.0), 0.5));
    DynamicsConfig cfg;
    cfg.kind = DynamicsKind::Sgd;
    cfg.eta = 0.1;
    cfg.lambda = 0.02;
    const Vec x0 = Vec(6, 1.0);
    const auto one = estimate_equilibrium(obj, cfg, x0, 500, 1000, 6, "unit/eq-th", 1);
    const auto three = estimate_equilibrium(obj, cfg, x0, 500, 1000, 6, "unit/eq-th", 3);
    CHECK(one.R == three.R);
    CHECK(one.G == three.G);
    CHECK(one.N == three.N);
    CHECK(one.R_se == three.R_se);
    CHECK(one.G_se == three.G_se);
    CHECK(one.N_se == three.N_se);
}

TEST_CASE("estimate_equilibrium: argument validation") {
    RayleighQuotientObjective ray(make_rayleigh_dataset(4, 10, 3));
    QuadraticGaussianObjective quad(Mat::identity(2), Vec(2, 0.0), Mat::identity(2));
    DynamicsConfig cfg;
    cfg.eta = 0.1;
    cfg.lambda = 0.0;
    const Vec x0 = Vec(4, 1.0);
    CHECK_THROWS_AS(estimate_equilibrium(ray, cfg, x0, 10, 10, 4, "unit/eq-bad"),
                    std::invalid_argument);  // lambda must be positive
    cfg.lambda = 0.01;
    CHECK_THROWS_AS(estimate_equilibrium(quad, cfg, Vec(2, 1.0), 10, 10, 4, "unit/eq-bad"),
                    std::invalid_argument);  // not scale invariant
    CHECK_THROWS_AS(estimate_equilibrium(ray, cfg, x0, 10, 10, 1, "unit/eq-bad"),
                    std::invalid_argument);  // too few replicas
    CHECK_THROWS_AS(estimate_equilibrium(ray, cfg, x0, 10, 0, 4, "unit/eq-bad"),
                    std::invalid_argument);  // empty window
}

TEST_CASE("estimate_equilibrium: total divergence is an error, not a number") {
    RayleighQuotientObjective obj(make_rayleigh_dataset(4, 10, 3));
    DynamicsConfig cfg;
    cfg.kind = DynamicsKind::Sgd;
    cfg.eta = 5.0;
    cfg.lambda = 1.0;  // decay factor 1 - eta*lambda = -4: norm explodes 16x per step
    // |x|^2 needs ~250 steps of 16x growth to cross the 1e300 divergence bar.
    CHECK_THROWS_AS(estimate_equilibrium(obj, cfg, Vec(4, 1.0), 400, 100, 4, "unit/eq-div"),
                    std::runtime_error);
}
