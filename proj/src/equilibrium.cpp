#include "sdelab/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sdelab/csv.hpp"
#include "sdelab/parallel.hpp"
#include "sdelab/rng.hpp"

namespace sdelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct ReplicaAggregate {
    double r = 0, g = 0, n = 0;
    double r1 = 0, g1 = 0, n1 = 0;  // first half of the measurement window
    double r2 = 0, g2 = 0, n2 = 0;  // second half
    std::uint64_t cnt = 0, cnt1 = 0, cnt2 = 0;
    bool diverged = false;
};

struct MeanSe {
    double mean = 0, se = 0;
};

MeanSe spread(const std::vector<double>& v) {
    MeanSe out;
    const std::size_t n = v.size();
    if (n == 0) return out;
    double s = 0;
    for (double x : v) s += x;
    out.mean = s / static_cast<double>(n);
    if (n > 1) {
        double ss = 0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(n - 1)));
    }
    return out;
}

// Noise-to-signal ratio N/G with a delta-method standard error; degenerate
// when G is not resolved away from zero.
MeanSe nsr_of(const EquilibriumStats& s) {
    if (!(s.G > 0.0) || s.G <= 3.0 * s.G_se) return {kInf, kInf};
    const double v = s.N / s.G;
    const double rel2 = (s.N_se / s.N) * (s.N_se / s.N) + (s.G_se / s.G) * (s.G_se / s.G);
    return {v, std::abs(v) * std::sqrt(rel2)};
}

}  // namespace

EquilibriumStats estimate_equilibrium(const StochasticObjective& obj, const DynamicsConfig& cfg,
                                      const Vec& x0, std::uint64_t burn_in,
                                      std::uint64_t measure_steps, std::size_t n_replicas,
                                      const std::string& experiment_id, unsigned n_threads) {
    if (!(cfg.lambda > 0.0))
        throw std::invalid_argument("estimate_equilibrium: weight decay lambda > 0 is required");
    if (!obj.scale_invariant())
        throw std::invalid_argument("estimate_equilibrium: objective must be scale invariant");
    if (n_replicas < 2) throw std::invalid_argument("estimate_equilibrium: need at least 2 replicas");
    if (measure_steps == 0)
        throw std::invalid_argument("estimate_equilibrium: measurement window must be nonempty");

    const bool sde = cfg.kind == DynamicsKind::Sde1 || cfg.kind == DynamicsKind::Sde2;
    const std::uint64_t subs = sde ? cfg.substeps_per_eta : 1;
    DynamicsConfig run = cfg;
    run.steps = (burn_in + measure_steps) * subs;
    run.record_every = std::max<std::uint64_t>(1, cfg.record_every) * subs;
    const std::uint64_t burn_boundary = burn_in * subs;
    const std::uint64_t half_boundary = burn_boundary + (run.steps - burn_boundary) / 2;

    std::vector<ReplicaAggregate> agg(n_replicas);
    parallel_for(n_replicas, n_threads, [&](std::size_t rep) {
        SampleStream stream(derive_stream(cfg.seed, experiment_id, static_cast<std::uint64_t>(rep)));
        const Trajectory t = run_trajectory(obj, run, x0, stream);
        ReplicaAggregate a;
        a.diverged = t.diverged;
        if (!t.diverged) {
            for (const auto& s : t.samples) {
                if (s.step <= burn_boundary) continue;
                a.r += s.sq_norm;
                a.g += s.sq_grad_norm;
                a.n += s.noise_trace;
                a.cnt += 1;
                if (s.step <= half_boundary) {
                    a.r1 += s.sq_norm;
                    a.g1 += s.sq_grad_norm;
                    a.n1 += s.noise_trace;
                    a.cnt1 += 1;
                } else {
                    a.r2 += s.sq_norm;
                    a.g2 += s.sq_grad_norm;
                    a.n2 += s.noise_trace;
                    a.cnt2 += 1;
                }
            }
        }
        agg[rep] = a;
    });

    std::vector<double> mr, mg, mn, h1r, h1g, h1n, h2r, h2g, h2n;
    std::uint64_t total = 0;
    std::size_t diverged = 0;
    for (const auto& a : agg) {
        if (a.diverged || a.cnt == 0) {
            ++diverged;
            continue;
        }
        const double c = static_cast<double>(a.cnt);
        mr.push_back(a.r / c);
        mg.push_back(a.g / c);
        mn.push_back(a.n / c);
        if (a.cnt1 > 0 && a.cnt2 > 0) {
            h1r.push_back(a.r1 / static_cast<double>(a.cnt1));
            h1g.push_back(a.g1 / static_cast<double>(a.cnt1));
            h1n.push_back(a.n1 / static_cast<double>(a.cnt1));
            h2r.push_back(a.r2 / static_cast<double>(a.cnt2));
            h2g.push_back(a.g2 / static_cast<double>(a.cnt2));
            h2n.push_back(a.n2 / static_cast<double>(a.cnt2));
        }
        total += a.cnt;
    }
    if (mr.size() < 2)
        throw std::runtime_error("estimate_equilibrium: fewer than 2 replicas survived to the end");

    EquilibriumStats out;
    const MeanSe r = spread(mr), g = spread(mg), n = spread(mn);
    out.R = r.mean;
    out.G = g.mean;
    out.N = n.mean;
    out.R_se = r.se;
    out.G_se = g.se;
    out.N_se = n.se;
    out.kind = cfg.kind;
    out.eta = cfg.eta;
    out.lambda = cfg.lambda;
    out.batch = cfg.batch;
    out.svag_l = cfg.l;
    out.burn_in_steps = burn_in;
    out.n_samples = total;
    out.n_replicas = n_replicas;
    out.n_diverged = diverged;

    const MeanSe pairs[][2] = {{spread(h1r), spread(h2r)},
                               {spread(h1g), spread(h2g)},
                               {spread(h1n), spread(h2n)}};
    for (const auto& p : pairs) {
        const double se = std::sqrt(p[0].se * p[0].se + p[1].se * p[1].se);
        if (std::abs(p[0].mean - p[1].mean) > 3.0 * se) out.stationarity_warning = true;
    }
    return out;
}

IdentityReport check_norm_identity(const EquilibriumStats& s, DynamicsKind identity_kind) {
    const double eta = s.eta, lam = s.lambda;
    double cr = 0, cg = 0, cn = 0;  // lhs = cr * R, rhs = cg * G + cn * N
    switch (identity_kind) {
        case DynamicsKind::Sgd:
            cr = (2.0 - eta * lam) * lam;
            cg = eta;
            cn = eta;
            break;
        case DynamicsKind::Svag: {
            const double h = eta / static_cast<double>(s.svag_l);
            cr = (2.0 - h * lam) * lam;
            cg = h;
            cn = eta;
            break;
        }
        case DynamicsKind::Ngd:
        case DynamicsKind::Sde1:
            cr = 2.0 * lam;
            cg = 0.0;
            cn = eta;
            break;
        case DynamicsKind::Sde2:
            cr = (2.0 + eta * lam) * lam;
            cg = eta;
            cn = eta;
            break;
    }
    IdentityReport rep;
    rep.identity_kind = identity_kind;
    rep.lhs = cr * s.R;
    rep.rhs = cg * s.G + cn * s.N;
    const double scale = std::max(std::abs(rep.lhs), std::abs(rep.rhs));
    rep.residual = scale > 0.0 ? std::abs(rep.lhs - rep.rhs) / scale : 0.0;
    const double var = cr * cr * s.R_se * s.R_se + cg * cg * s.G_se * s.G_se + cn * cn * s.N_se * s.N_se;
    const double diff = rep.lhs - rep.rhs;
    rep.z = var > 0.0 ? diff / std::sqrt(var) : (diff == 0.0 ? 0.0 : kInf);
    return rep;
}

IdentityReport check_norm_identity(const EquilibriumStats& s) { return check_norm_identity(s, s.kind); }

namespace {

ClosenessVerdict closeness_from_ratios(double num_r, double den_r, double num_g, double den_g,
                                       double num_n, double den_n, double C) {
    ClosenessVerdict v;
    v.threshold = C;
    const struct {
        const char* name;
        double num, den;
    } parts[] = {{"R", num_r, den_r}, {"G", num_g, den_g}, {"N", num_n, den_n}};
    double worst = 0.0;
    for (const auto& p : parts) {
        if (!(p.num > 0.0) || !(p.den > 0.0)) {
            v.defined = false;
            if (!v.diagnostic.empty()) v.diagnostic += "; ";
            v.diagnostic += std::string(p.name) + " ratio undefined (nonpositive component)";
            continue;
        }
        const double r = p.num / p.den;
        const double two_sided = std::max(r, 1.0 / r);
        if (p.name[0] == 'R') v.ratio_R = two_sided;
        if (p.name[0] == 'G') v.ratio_G = two_sided;
        if (p.name[0] == 'N') v.ratio_N = two_sided;
        worst = std::max(worst, two_sided);
    }
    v.C_achieved = v.defined ? worst : kNan;
    v.close = v.defined && v.C_achieved <= C;
    return v;
}

}  // namespace

ClosenessVerdict c_closeness(const EquilibriumStats& a, const EquilibriumStats& b, double eta,
                             double C) {
    if (!(eta > 0.0)) throw std::invalid_argument("c_closeness: eta must be positive");
    if (!(C >= 1.0)) throw std::invalid_argument("c_closeness: C >= 1 required");
    if (std::abs(a.lambda - b.lambda) > 1e-12 * std::max(a.lambda, b.lambda))
        throw std::invalid_argument("c_closeness: the two equilibria must share lambda");
    return closeness_from_ratios(a.R, b.R, a.G, b.G, eta * a.N, b.eta * b.N, C);
}

ClosenessVerdict lsi_closeness(const EquilibriumStats& base, const EquilibriumStats& scaled,
                               double kappa, double C) {
    if (!(kappa > 0.0)) throw std::invalid_argument("lsi_closeness: kappa must be positive");
    if (!(C >= 1.0)) throw std::invalid_argument("lsi_closeness: C >= 1 required");
    if (std::abs(base.lambda - scaled.lambda) > 1e-12 * std::max(base.lambda, scaled.lambda))
        throw std::invalid_argument("lsi_closeness: the two equilibria must share lambda");
    return closeness_from_ratios(base.R, scaled.R, base.G, scaled.G, base.N, kappa * scaled.N, C);
}

const char* cert_verdict_name(CertVerdict v) {
    switch (v) {
        case CertVerdict::FailCertified: return "FAIL-CERTIFIED";
        case CertVerdict::Inconclusive: return "INCONCLUSIVE";
        case CertVerdict::NotApplicable: return "NOT-APPLICABLE";
        case CertVerdict::Diverged: return "DIVERGED";
    }
    return "UNKNOWN";
}

SdeCertificate sde_failure_certificate(const EquilibriumStats* stats_sde,
                                       const EquilibriumStats* stats_sgd, double eta, double C) {
    if (!(C > 1.0))
        throw std::invalid_argument("sde_failure_certificate: C > 1 required for a refutation bound");
    if (stats_sde == nullptr && stats_sgd == nullptr)
        throw std::invalid_argument("sde_failure_certificate: stats for at least one side required");
    if (!(eta > 0.0)) throw std::invalid_argument("sde_failure_certificate: eta must be positive");

    SdeCertificate cert;
    cert.threshold = 1.0 / (C * C - 1.0);
    cert.nsr_sde = cert.nsr_sgd = kNan;
    if (stats_sde != nullptr) {
        const MeanSe m = nsr_of(*stats_sde);
        // Literal form of the SDE-side condition: eta exceeds the eta-scaled
        // noise-to-signal floor (eta_sde * N / G) * (C^2 - 1); with matching
        // etas this is NSR_sde < 1/(C^2 - 1).
        const double scaled = (stats_sde->eta / eta) * m.mean;
        const double scaled_se = (stats_sde->eta / eta) * m.se;
        cert.nsr_sde = m.mean;
        cert.nsr_sde_se = m.se;
        cert.condition_sde = std::isfinite(scaled) && scaled + 3.0 * scaled_se < cert.threshold;
    }
    if (stats_sgd != nullptr) {
        const MeanSe m = nsr_of(*stats_sgd);
        cert.nsr_sgd = m.mean;
        cert.nsr_sgd_se = m.se;
        cert.condition_sgd = std::isfinite(m.mean) && m.mean + 3.0 * m.se < cert.threshold;
    }
    cert.verdict = (cert.condition_sde || cert.condition_sgd) ? CertVerdict::FailCertified
                                                              : CertVerdict::Inconclusive;
    return cert;
}

LsiCertificate lsi_failure_certificate(const EquilibriumStats& stats_scaled, double C, double kappa) {
    if (!(C > 1.0)) throw std::invalid_argument("lsi_failure_certificate: C > 1 required");
    if (!(C * C < kappa))
        throw std::domain_error("lsi_failure_certificate: requires C^2 < kappa, the bound is vacuous otherwise");
    LsiCertificate cert;
    cert.threshold = (1.0 - 1.0 / kappa) / (C * C - 1.0) - 1.0 / kappa;
    const MeanSe m = nsr_of(stats_scaled);
    cert.nsr_scaled = m.mean;
    cert.nsr_scaled_se = m.se;
    cert.verdict = std::isfinite(m.mean) && m.mean + 3.0 * m.se < cert.threshold
                       ? CertVerdict::FailCertified
                       : CertVerdict::Inconclusive;
    return cert;
}

KappaPrediction predict_critical_kappa(const EquilibriumStats& base, double C) {
    if (!(C > 1.0)) throw std::invalid_argument("predict_critical_kappa: C > 1 required");
    if (!(base.G > 0.0) || base.G <= base.G_se)
        throw std::domain_error("predict_critical_kappa: G is within one SE of zero");
    const MeanSe m = nsr_of(base);
    if (!std::isfinite(m.mean))
        throw std::domain_error("predict_critical_kappa: noise-to-signal ratio not resolved");
    KappaPrediction p;
    p.kappa_star = C * C * (1.0 + m.mean);
    p.kappa_star_se = C * C * m.se;
    p.approx = C * C * m.mean;
    return p;
}

EtaSweepResult run_eta_sweep(const StochasticObjective& obj, DynamicsConfig sgd_template,
                             DynamicsConfig sde_template, const std::vector<double>& eta_values,
                             double C, const Vec& x0, std::uint64_t burn_in,
                             std::uint64_t measure_steps, std::size_t n_replicas,
                             const std::string& experiment_id, unsigned n_threads) {
    EtaSweepResult result;
    for (std::size_t i = 0; i < eta_values.size(); ++i) {
        EtaSweepRow row;
        row.eta = eta_values[i];
        const std::string tag = "/" + std::to_string(i);

        DynamicsConfig cs = sgd_template;
        cs.eta = row.eta;
        try {
            row.sgd = estimate_equilibrium(obj, cs, x0, burn_in, measure_steps, n_replicas,
                                           experiment_id + "/sgd" + tag, n_threads);
        } catch (const std::runtime_error&) {
            row.sgd_diverged = true;
        }

        DynamicsConfig cd = sde_template;
        cd.eta = row.eta;
        try {
            row.sde = estimate_equilibrium(obj, cd, x0, burn_in, measure_steps, n_replicas,
                                           experiment_id + "/sde" + tag, n_threads);
        } catch (const std::runtime_error&) {
            row.sde_diverged = true;
        }

        if (!row.sgd_diverged && !row.sde_diverged) {
            row.closeness = c_closeness(row.sgd, row.sde, row.eta, C);
            row.certificate = sde_failure_certificate(&row.sde, &row.sgd, row.eta, C);
        } else if (!row.sgd_diverged || !row.sde_diverged) {
            const EquilibriumStats* sde = row.sde_diverged ? nullptr : &row.sde;
            const EquilibriumStats* sgd = row.sgd_diverged ? nullptr : &row.sgd;
            row.certificate = sde_failure_certificate(sde, sgd, row.eta, C);
            row.closeness.defined = false;
            row.closeness.diagnostic = "one side diverged";
        } else {
            row.certificate.verdict = CertVerdict::Diverged;
            row.closeness.defined = false;
            row.closeness.diagnostic = "both sides diverged";
        }

        const bool certified = row.certificate.verdict == CertVerdict::FailCertified;
        const bool broken = row.sgd_diverged || row.sde_diverged ||
                            (row.closeness.defined && row.closeness.C_achieved > C);
        if (certified && result.smallest_eta_certified == 0.0) result.smallest_eta_certified = row.eta;
        if (broken && result.smallest_eta_break == 0.0) result.smallest_eta_break = row.eta;
        result.rows.push_back(std::move(row));
    }
    return result;
}

KappaSweepResult run_kappa_sweep(const StochasticObjective& obj, const DynamicsConfig& baseline_cfg,
                                 const std::vector<double>& kappa_values, double C, const Vec& x0,
                                 std::uint64_t burn_in, std::uint64_t measure_steps,
                                 std::size_t n_replicas, const std::string& experiment_id,
                                 unsigned n_threads) {
    KappaSweepResult result;
    result.baseline = estimate_equilibrium(obj, baseline_cfg, x0, burn_in, measure_steps, n_replicas,
                                           experiment_id + "/base", n_threads);
    result.prediction = predict_critical_kappa(result.baseline, C);

    for (std::size_t i = 0; i < kappa_values.size(); ++i) {
        KappaSweepRow row;
        row.kappa = kappa_values[i];
        DynamicsConfig cfg = baseline_cfg;
        cfg.eta = baseline_cfg.eta * row.kappa;
        cfg.batch = baseline_cfg.batch * row.kappa;
        try {
            row.scaled = estimate_equilibrium(obj, cfg, x0, burn_in, measure_steps, n_replicas,
                                              experiment_id + "/k" + std::to_string(i), n_threads);
        } catch (const std::runtime_error&) {
            row.diverged = true;
        }
        if (!row.diverged) {
            row.nsr = nsr_of(row.scaled).mean;
            row.closeness = lsi_closeness(result.baseline, row.scaled, row.kappa, C);
            if (C * C < row.kappa) {
                row.certificate = lsi_failure_certificate(row.scaled, C, row.kappa);
            } else {
                row.certificate.verdict = CertVerdict::NotApplicable;
            }
        } else {
            row.nsr = kNan;
            row.closeness.defined = false;
            row.closeness.diagnostic = "scaled run diverged";
            row.certificate.verdict = CertVerdict::Diverged;
        }
        const bool broken =
            row.diverged || (row.closeness.defined && row.closeness.C_achieved > C);
        if (broken && result.smallest_kappa_break == 0.0) result.smallest_kappa_break = row.kappa;
        result.rows.push_back(std::move(row));
    }
    return result;
}

namespace {

void append_sweep_row(std::string& body, double key, const EquilibriumStats& s, bool diverged,
                      double nsr, const ClosenessVerdict& close, CertVerdict verdict) {
    csv::append_double(body, key);
    body += ',';
    csv::append_double(body, diverged ? kNan : s.R);
    body += ',';
    csv::append_double(body, diverged ? kNan : s.G);
    body += ',';
    csv::append_double(body, diverged ? kNan : s.N);
    body += ',';
    csv::append_double(body, nsr);
    body += ',';
    csv::append_double(body, close.defined ? close.C_achieved : kNan);
    body += ',';
    body += cert_verdict_name(verdict);
    body += '\n';
}

}  // namespace

void write_kappa_sweep_csv(const std::string& path, const KappaSweepResult& result) {
    std::string body = "kappa,R,G,N,NSR,C_achieved,certificate\n";
    for (const auto& row : result.rows) {
        append_sweep_row(body, row.kappa, row.scaled, row.diverged, row.nsr, row.closeness,
                         row.certificate.verdict);
    }
    csv::write_text_file(path, body);
}

void write_eta_sweep_csv(const std::string& path, const EtaSweepResult& result) {
    std::string body = "eta,R,G,N,NSR,C_achieved,certificate\n";
    for (const auto& row : result.rows) {
        append_sweep_row(body, row.eta, row.sgd, row.sgd_diverged, row.certificate.nsr_sgd,
                         row.closeness, row.certificate.verdict);
    }
    csv::write_text_file(path, body);
}

}  // namespace sdelab
