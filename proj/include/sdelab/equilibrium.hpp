#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdelab/integrators.hpp"
#include "sdelab/objectives.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

// Stationary second-moment summary of one dynamics on one scale-invariant
// objective: R = E|x|^2, G = E|grad L(x)|^2, N = E tr Sigma_B(x), measured in
// the dynamics' own (unscaled) units.  Standard errors come from the spread of
// per-replica means.
struct EquilibriumStats {
    double R = 0.0, G = 0.0, N = 0.0;
    double R_se = 0.0, G_se = 0.0, N_se = 0.0;
    DynamicsKind kind = DynamicsKind::Sgd;
    double eta = 0.0;
    double lambda = 0.0;
    double batch = 1.0;
    std::uint64_t svag_l = 1;
    std::uint64_t burn_in_steps = 0;
    std::uint64_t n_samples = 0;  // post-burn-in records pooled over replicas
    std::size_t n_replicas = 0;
    std::size_t n_diverged = 0;
    bool stationarity_warning = false;  // window halves differ by > 3 SE
};

// Runs n_replicas independent trajectories of cfg's dynamics for
// burn_in + measure_steps steps of size eta (SDE kinds take
// substeps_per_eta internal substeps per eta of time), discards the burn-in,
// and averages R, G, N over the recorded tail.  Throws when lambda <= 0, when
// the objective is not scale invariant, or when every replica diverges;
// diverged replicas are excluded and counted.
EquilibriumStats estimate_equilibrium(const StochasticObjective& obj, const DynamicsConfig& cfg,
                                      const Vec& x0, std::uint64_t burn_in,
                                      std::uint64_t measure_steps, std::size_t n_replicas,
                                      const std::string& experiment_id, unsigned n_threads = 1);

struct IdentityReport {
    DynamicsKind identity_kind = DynamicsKind::Sgd;
    double lhs = 0.0;       // decay side of the stationary norm balance
    double rhs = 0.0;       // injection side
    double residual = 0.0;  // |lhs - rhs| / max(|lhs|, |rhs|)
    double z = 0.0;         // (lhs - rhs) / propagated SE
};

// Stationary norm balance for the given dynamics kind, evaluated on measured
// stats (eta = stats.eta, lambda = stats.lambda, h = eta / l for the
// interpolated dynamics):
//   sgd        :  (2 - eta*lambda) * lambda * R  =  eta * (G + N)
//   svag       :  (2 - h*lambda) * lambda * R    =  h * G + eta * N
//   ngd, sde1  :  2 * lambda * R                 =  eta * N
//   sde2       :  (2 + eta*lambda) * lambda * R  =  eta * (G + N)
// The ngd/sde1 balance is the continuous-time one; plugging discrete-dynamics
// stats into it leaves the eta*G gradient term as the residual, which is how
// far that equilibrium sits from its diffusion counterpart.  Passing a kind
// different from stats.kind measures exactly such cross-checks.
IdentityReport check_norm_identity(const EquilibriumStats& stats, DynamicsKind identity_kind);
IdentityReport check_norm_identity(const EquilibriumStats& stats);

struct ClosenessVerdict {
    double C_achieved = 0.0;  // max of the three two-sided ratios
    double threshold = 0.0;   // the C the pair is tested against
    bool close = false;       // C_achieved <= threshold
    bool defined = true;      // false on nonpositive ratio components
    double ratio_R = 0.0, ratio_G = 0.0, ratio_N = 0.0;  // two-sided, >= 1
    std::string diagnostic;
};

// C-closeness of a discrete equilibrium (stats_a) to an SDE equilibrium
// (stats_b) at learning rate eta: two-sided ratios of R, of G, and of the
// eta-scaled noise traces (eta * N_a versus stats_b.eta * N_b, the SDE side
// carrying its diffusion-scaled trace).  Requires equal lambda.
ClosenessVerdict c_closeness(const EquilibriumStats& stats_a, const EquilibriumStats& stats_b,
                             double eta, double C);

// C-closeness of a baseline (B, eta) equilibrium to a (kappa*B, kappa*eta)
// equilibrium of the same discrete dynamics: the scaled run's noise trace is
// multiplied by kappa before comparison, since batch scaling divides the
// per-step noise covariance by kappa.
ClosenessVerdict lsi_closeness(const EquilibriumStats& base, const EquilibriumStats& scaled,
                               double kappa, double C);

enum class CertVerdict { FailCertified, Inconclusive, NotApplicable, Diverged };

const char* cert_verdict_name(CertVerdict v);

struct SdeCertificate {
    CertVerdict verdict = CertVerdict::Inconclusive;
    bool condition_sde = false;  // noise-to-signal of the SDE equilibrium below threshold
    bool condition_sgd = false;  // noise-to-signal of the discrete equilibrium below threshold
    double nsr_sde = 0.0, nsr_sde_se = 0.0;
    double nsr_sgd = 0.0, nsr_sgd_se = 0.0;
    double threshold = 0.0;  // 1 / (C^2 - 1)
};

// One-sided refutation certificate: if the discrete dynamics and its SDE did
// agree to within C in the c_closeness sense, each equilibrium would need a
// noise-to-signal ratio N/G of at least 1/(C^2 - 1).  A measured NSR below
// that threshold by a 3-SE margin on either side certifies failure; otherwise
// the certificate is inconclusive (never a proof of closeness).  Either stats
// pointer may be null when only one side was measured; C must exceed 1.
SdeCertificate sde_failure_certificate(const EquilibriumStats* stats_sde,
                                       const EquilibriumStats* stats_sgd, double eta, double C);

struct LsiCertificate {
    CertVerdict verdict = CertVerdict::Inconclusive;
    double nsr_scaled = 0.0, nsr_scaled_se = 0.0;
    double threshold = 0.0;  // (1 - 1/kappa)/(C^2 - 1) - 1/kappa
};

// Linear-scaling-rule refutation certificate for a kappa-scaled run: closeness
// within C to the baseline forces NSR_scaled >= (1 - 1/kappa)/(C^2-1) - 1/kappa.
// Requires 1 < C^2 < kappa (throws std::domain_error otherwise).
LsiCertificate lsi_failure_certificate(const EquilibriumStats& stats_scaled, double C, double kappa);

struct KappaPrediction {
    double kappa_star = 0.0;  // C^2 * (1 + N/G) from the baseline equilibrium
    double kappa_star_se = 0.0;
    double approx = 0.0;  // large-NSR shorthand C^2 * N/G
};

// Largest kappa up to which the scaling rule can stay C-close, predicted from
// baseline stats alone.  Throws std::domain_error when G is within one SE of
// zero (the prediction would be meaningless).
KappaPrediction predict_critical_kappa(const EquilibriumStats& base, double C);

struct EtaSweepRow {
    double eta = 0.0;
    EquilibriumStats sgd, sde;
    bool sgd_diverged = false, sde_diverged = false;  // all replicas lost
    ClosenessVerdict closeness;
    SdeCertificate certificate;
};

struct EtaSweepResult {
    std::vector<EtaSweepRow> rows;
    double smallest_eta_certified = 0.0;  // 0 when no certificate fired
    double smallest_eta_break = 0.0;      // 0 when measured C_achieved never exceeded C
};

// For each eta, measures the discrete equilibrium (sgd_template) and the
// first-order SDE equilibrium (sde_template) and evaluates both the closeness
// and the failure certificate at level C.  A run whose replicas all diverge
// counts as broken/certified at that eta.
EtaSweepResult run_eta_sweep(const StochasticObjective& obj, DynamicsConfig sgd_template,
                             DynamicsConfig sde_template, const std::vector<double>& eta_values,
                             double C, const Vec& x0, std::uint64_t burn_in,
                             std::uint64_t measure_steps, std::size_t n_replicas,
                             const std::string& experiment_id, unsigned n_threads = 1);

struct KappaSweepRow {
    double kappa = 0.0;
    EquilibriumStats scaled;
    bool diverged = false;
    double nsr = 0.0;
    ClosenessVerdict closeness;
    LsiCertificate certificate;
};

struct KappaSweepResult {
    EquilibriumStats baseline;
    KappaPrediction prediction;
    std::vector<KappaSweepRow> rows;
    double smallest_kappa_break = 0.0;  // 0 when no kappa broke closeness
};

// Scales the baseline config to (kappa * batch, kappa * eta) for each kappa,
// measures the equilibrium, and evaluates lsi_closeness plus the LSI failure
// certificate against the baseline.  Divergence of a scaled run counts as a
// break at that kappa.
KappaSweepResult run_kappa_sweep(const StochasticObjective& obj, const DynamicsConfig& baseline_cfg,
                                 const std::vector<double>& kappa_values, double C, const Vec& x0,
                                 std::uint64_t burn_in, std::uint64_t measure_steps,
                                 std::size_t n_replicas, const std::string& experiment_id,
                                 unsigned n_threads = 1);

// CSV exports: one row per sweep point with columns
//   kappa,R,G,N,NSR,C_achieved,certificate   (resp. eta,... for the eta sweep,
// reporting the discrete-side stats).
void write_kappa_sweep_csv(const std::string& path, const KappaSweepResult& result);
void write_eta_sweep_csv(const std::string& path, const EtaSweepResult& result);

}  // namespace sdelab
