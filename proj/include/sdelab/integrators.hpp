#pragma once

#include "sdelab/linalg.hpp"
#include "sdelab/objectives.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace sdelab {

// Discrete dynamics and the SDE discretizations they are compared against.
//  sgd   x' = x - eta (grad_batch + lambda x)
//  svag  x' = x - (eta/l) (a+ grad_1 + a- grad_2 + lambda x)
//  ngd   x' = x - eta (grad_mean + lambda x) + eta Sigma^{1/2} z
//  sde1  Euler-Maruyama substep of dX = -(grad_mean + lambda X) dt + (eta Sigma)^{1/2} dW
//  sde2  as sde1 plus the Hessian drift correction (eta/2) H grad_mean and the
//        weight-decay drift -lambda (1 + eta lambda / 2) X
// For sde kinds one step is one substep of duration h = eta / substeps_per_eta.
enum class DynamicsKind { Sgd, Svag, Ngd, Sde1, Sde2 };

DynamicsKind dynamics_kind_from_string(const std::string& s);
std::string to_string(DynamicsKind k);

struct DynamicsConfig {
    DynamicsKind kind = DynamicsKind::Sgd;
    double eta = 0.1;
    double lambda = 0.0;
    double batch = 1.0;
    std::uint64_t l = 1;              // svag noise interpolation parameter
    std::uint64_t steps = 0;
    std::uint64_t record_every = 10;
    SamplingMode mode = SamplingMode::WithReplacement;
    std::uint64_t substeps_per_eta = 20;  // sde1/sde2 substep count per eta of time
    std::uint64_t seed = 0;

    double substep() const { return eta / static_cast<double>(substeps_per_eta); }
};

// One-line diagnostics; empty means valid.
std::vector<std::string> validate(const DynamicsConfig& cfg, const StochasticObjective& obj);

struct TestFunctionSample {
    std::uint64_t step = 0;
    double sq_norm = 0.0;       // |x|^2
    double sq_grad_norm = 0.0;  // |grad_mean(x)|^2
    double noise_trace = 0.0;   // tr Sigma_batch(x)
    double loss = 0.0;          // expected loss at x
    double sq_displacement = 0.0;  // |x - x0|^2
};

struct Trajectory {
    std::vector<TestFunctionSample> samples;
    Vec final_x;
    std::uint64_t steps_completed = 0;
    bool diverged = false;
};

// Caches the PSD square root of the batch noise covariance when the objective
// declares it constant; otherwise recomputes per step.
class NoiseSqrt {
  public:
    NoiseSqrt(const StochasticObjective& obj, double batch);
    const Mat& at(const Vec& x);

  private:
    const StochasticObjective& obj_;
    double batch_;
    bool constant_;
    bool ready_ = false;
    Mat cached_;
};

// Single updates. `used_grad` (when non-null) receives the stochastic gradient
// that entered the update, excluding the weight-decay term.
void step_sgd(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
              SampleStream& stream, Vec* used_grad = nullptr);
void step_svag(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, Vec* used_grad = nullptr);
void step_ngd(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
              SampleStream& stream, NoiseSqrt& noise);
void step_sde1(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, NoiseSqrt& noise);
void step_sde2(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, NoiseSqrt& noise);

// Runs cfg.steps updates from x0, recording test functions at step 0, every
// record_every-th step and the final step. A non-finite iterate truncates the
// run and sets `diverged`.
Trajectory run_trajectory(const StochasticObjective& obj, const DynamicsConfig& cfg, const Vec& x0,
                          SampleStream& stream);

void write_trajectory_csv(const std::string& path, const Trajectory& t);

// Linear scaling rule runs on the 1-D Poisson objective: batch B, learning
// rate B*eta, T/B steps from x=0. Returns one terminal value per replica.
// T/B must be integral; B may be fractional (generalized scaling).
Vec run_poisson_lsr(const PoissonLinearObjective& obj, double eta, double batch, double horizon,
                    std::size_t n_replicas, std::uint64_t seed, const std::string& experiment_id);
Vec run_poisson_lsr_ngd(const PoissonLinearObjective& obj, double eta, double batch, double horizon,
                        std::size_t n_replicas, std::uint64_t seed,
                        const std::string& experiment_id);

}  // namespace sdelab
