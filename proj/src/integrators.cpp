#include "sdelab/integrators.hpp"

#include "sdelab/csv.hpp"

#include "sdelab/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sdelab {

DynamicsKind dynamics_kind_from_string(const std::string& s) {
    if (s == "sgd") return DynamicsKind::Sgd;
    if (s == "svag") return DynamicsKind::Svag;
    if (s == "ngd") return DynamicsKind::Ngd;
    if (s == "sde1") return DynamicsKind::Sde1;
    if (s == "sde2") return DynamicsKind::Sde2;
    throw std::invalid_argument("unknown dynamics kind: " + s);
}

std::string to_string(DynamicsKind k) {
    switch (k) {
        case DynamicsKind::Sgd: return "sgd";
        case DynamicsKind::Svag: return "svag";
        case DynamicsKind::Ngd: return "ngd";
        case DynamicsKind::Sde1: return "sde1";
        case DynamicsKind::Sde2: return "sde2";
    }
    return "?";
}

std::vector<std::string> validate(const DynamicsConfig& cfg, const StochasticObjective& obj) {
    std::vector<std::string> out;
    if (!(cfg.eta > 0.0)) out.push_back("eta: must be positive");
    if (cfg.lambda < 0.0) out.push_back("lambda: must be nonnegative");
    if (!(cfg.batch > 0.0)) out.push_back("batch: must be positive");
    const bool fractional = cfg.batch != std::floor(cfg.batch);
    if (fractional && obj.dataset_size() > 0)
        out.push_back("batch: fractional batches are only defined for generator-based objectives");
    if (cfg.l < 1) out.push_back("l: must be >= 1");
    if (cfg.l > 1 && cfg.kind != DynamicsKind::Svag)
        out.push_back("l: only meaningful for svag dynamics");
    if (cfg.record_every < 1) out.push_back("record_every: must be >= 1");
    if (cfg.substeps_per_eta < 1) out.push_back("substeps_per_eta: must be >= 1");
    if (cfg.mode != SamplingMode::WithReplacement && obj.dataset_size() == 0)
        out.push_back("mode: generator-based objectives only support with_replacement");
    if (cfg.mode == SamplingMode::WithoutReplacement && obj.dataset_size() > 0 &&
        cfg.batch > static_cast<double>(obj.dataset_size()))
        out.push_back("batch: exceeds dataset size for without_replacement sampling");
    return out;
}

NoiseSqrt::NoiseSqrt(const StochasticObjective& obj, double batch)
    : obj_(obj), batch_(batch), constant_(obj.constant_noise()) {}

const Mat& NoiseSqrt::at(const Vec& x) {
    if (constant_ && ready_) return cached_;
    cached_ = sym_sqrt(obj_.noise_covariance(x, batch_));
    ready_ = true;
    return cached_;
}

void step_sgd(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
              SampleStream& stream, Vec* used_grad) {
    const std::size_t d = x.size();
    GradientSample s = obj.sample_gradient(x, cfg.batch, cfg.mode, stream);
    kernels::axpby(d, -cfg.eta, s.gradient.data(), 1.0 - cfg.eta * cfg.lambda, x.data());
    if (used_grad) *used_grad = std::move(s.gradient);
}

void step_svag(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, Vec* used_grad) {
    if (cfg.l == 1) {  // coefficients (1, 0): bitwise identical to sgd on the same stream
        step_sgd(obj, x, cfg, stream, used_grad);
        return;
    }
    const std::size_t d = x.size();
    const double l = static_cast<double>(cfg.l);
    const double root = std::sqrt(2.0 * l - 1.0);
    const double ap = 0.5 * (1.0 + root), am = 0.5 * (1.0 - root);
    GradientSample g1 = obj.sample_gradient(x, cfg.batch, cfg.mode, stream);
    GradientSample g2 = obj.sample_gradient(x, cfg.batch, cfg.mode, stream);
    Vec gc(d);
    kernels::combine(d, ap, g1.gradient.data(), am, g2.gradient.data(), gc.data());
    const double lr = cfg.eta / l;
    kernels::axpby(d, -lr, gc.data(), 1.0 - lr * cfg.lambda, x.data());
    if (used_grad) *used_grad = std::move(gc);
}

void step_ngd(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
              SampleStream& stream, NoiseSqrt& noise) {
    const std::size_t d = x.size();
    const Vec grad = obj.expected_gradient(x);
    const Mat& m = noise.at(x);
    Vec z(d), inj(d);
    for (auto& v : z) v = stream.rng.normal();
    kernels::matvec(d, d, m.a.data(), z.data(), inj.data());
    kernels::axpby(d, -cfg.eta, grad.data(), 1.0 - cfg.eta * cfg.lambda, x.data());
    kernels::axpy(d, cfg.eta, inj.data(), x.data());
}

namespace {

void em_substep(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
                SampleStream& stream, NoiseSqrt& noise, bool second_order) {
    const std::size_t d = x.size();
    const double h = cfg.substep();
    Vec drift = obj.expected_gradient(x);
    double decay = cfg.lambda;
    if (second_order) {
        const Vec hg = obj.hessian_vector_product(x, drift);
        kernels::axpy(d, 0.5 * cfg.eta, hg.data(), drift.data());
        decay = cfg.lambda * (1.0 + 0.5 * cfg.eta * cfg.lambda);
    }
    const Mat& m = noise.at(x);
    Vec z(d), inj(d);
    for (auto& v : z) v = stream.rng.normal();
    kernels::matvec(d, d, m.a.data(), z.data(), inj.data());
    kernels::axpby(d, -h, drift.data(), 1.0 - h * decay, x.data());
    kernels::axpy(d, std::sqrt(h * cfg.eta), inj.data(), x.data());
}

}  // namespace

void step_sde1(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, NoiseSqrt& noise) {
    em_substep(obj, x, cfg, stream, noise, false);
}

void step_sde2(const StochasticObjective& obj, Vec& x, const DynamicsConfig& cfg,
               SampleStream& stream, NoiseSqrt& noise) {
    em_substep(obj, x, cfg, stream, noise, true);
}

namespace {

TestFunctionSample measure(const StochasticObjective& obj, const DynamicsConfig& cfg, const Vec& x,
                           const Vec& x0, std::uint64_t step) {
    TestFunctionSample s;
    s.step = step;
    const std::size_t d = x.size();
    s.sq_norm = kernels::sq_norm(d, x.data());
    const Vec g = obj.expected_gradient(x);
    s.sq_grad_norm = kernels::sq_norm(d, g.data());
    s.noise_trace = obj.noise_trace(x, cfg.batch);
    s.loss = obj.loss(x);
    Vec disp(d);
    kernels::combine(d, 1.0, x.data(), -1.0, x0.data(), disp.data());
    s.sq_displacement = kernels::sq_norm(d, disp.data());
    return s;
}

}  // namespace

Trajectory run_trajectory(const StochasticObjective& obj, const DynamicsConfig& cfg, const Vec& x0,
                          SampleStream& stream) {
    {
        auto problems = validate(cfg, obj);
        if (!problems.empty())
            throw std::invalid_argument("run_trajectory: invalid config: " + problems.front());
    }
    if (x0.size() != obj.dim()) throw std::invalid_argument("run_trajectory: x0 dimension mismatch");

    Trajectory t;
    Vec x = x0;
    NoiseSqrt noise(obj, cfg.batch);
    t.samples.push_back(measure(obj, cfg, x, x0, 0));

    for (std::uint64_t k = 1; k <= cfg.steps; ++k) {
        switch (cfg.kind) {
            case DynamicsKind::Sgd: step_sgd(obj, x, cfg, stream); break;
            case DynamicsKind::Svag: step_svag(obj, x, cfg, stream); break;
            case DynamicsKind::Ngd: step_ngd(obj, x, cfg, stream, noise); break;
            case DynamicsKind::Sde1: step_sde1(obj, x, cfg, stream, noise); break;
            case DynamicsKind::Sde2: step_sde2(obj, x, cfg, stream, noise); break;
        }
        const double sq = kernels::sq_norm(x.size(), x.data());
        if (!std::isfinite(sq) || sq > 1e300) {
            t.diverged = true;
            t.steps_completed = k;
            break;
        }
        if (k % cfg.record_every == 0 || k == cfg.steps)
            t.samples.push_back(measure(obj, cfg, x, x0, k));
        t.steps_completed = k;
    }
    t.final_x = std::move(x);
    return t;
}

void write_trajectory_csv(const std::string& path, const Trajectory& t) {
    std::string body = "step,sq_norm,sq_grad_norm,noise_trace,loss,sq_displacement\n";
    for (const auto& s : t.samples) {
        body += std::to_string(s.step);
        for (double v : {s.sq_norm, s.sq_grad_norm, s.noise_trace, s.loss, s.sq_displacement}) {
            body += ',';
            csv::append_double(body, v);
        }
        body += '\n';
    }
    csv::write_text_file(path, body);
}

namespace {

std::uint64_t lsr_steps(double batch, double horizon) {
    const double steps = horizon / batch;
    const double rounded = std::round(steps);
    if (!(steps > 0.0) || std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("poisson lsr: horizon / batch must be a positive integer");
    return static_cast<std::uint64_t>(rounded);
}

}  // namespace

Vec run_poisson_lsr(const PoissonLinearObjective& obj, double eta, double batch, double horizon,
                    std::size_t n_replicas, std::uint64_t seed, const std::string& experiment_id) {
    const std::uint64_t steps = lsr_steps(batch, horizon);
    const double lr = batch * eta;
    Vec finals(n_replicas);
    for (std::size_t r = 0; r < n_replicas; ++r) {
        SampleStream stream(derive_stream(seed, experiment_id, r));
        Vec x{0.0};
        for (std::uint64_t k = 0; k < steps; ++k) {
            GradientSample g = obj.sample_gradient(x, batch, SamplingMode::WithReplacement, stream);
            x[0] -= lr * g.gradient[0];
        }
        finals[r] = x[0];
    }
    return finals;
}

Vec run_poisson_lsr_ngd(const PoissonLinearObjective& obj, double eta, double batch, double horizon,
                        std::size_t n_replicas, std::uint64_t seed,
                        const std::string& experiment_id) {
    const std::uint64_t steps = lsr_steps(batch, horizon);
    const double lr = batch * eta;
    const double mean_grad = obj.rate();
    const double noise_sd = std::sqrt(obj.rate() / batch);
    Vec finals(n_replicas);
    for (std::size_t r = 0; r < n_replicas; ++r) {
        Rng rng = derive_stream(seed, experiment_id, r);
        double x = 0.0;
        for (std::uint64_t k = 0; k < steps; ++k)
            x -= lr * (mean_grad - noise_sd * rng.normal());
        finals[r] = x;
    }
    return finals;
}

}  // namespace sdelab
