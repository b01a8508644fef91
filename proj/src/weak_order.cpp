#include "sdelab/weak_order.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "sdelab/csv.hpp"
#include "sdelab/integrators.hpp"
#include "sdelab/linalg.hpp"
#include "sdelab/parallel.hpp"
#include "sdelab/rng.hpp"

namespace sdelab {

namespace {

constexpr int kMaxDegree = 6;

}  // namespace

PolynomialTestFunction::PolynomialTestFunction(std::size_t dim, std::vector<Monomial> terms)
    : dim_(dim), terms_(std::move(terms)) {
    if (dim_ == 0) throw std::invalid_argument("PolynomialTestFunction: dimension must be positive");
    for (const auto& t : terms_) {
        if (t.exponents.size() != dim_)
            throw std::invalid_argument("PolynomialTestFunction: exponent tuple has wrong arity");
        unsigned total = 0;
        for (unsigned e : t.exponents) total += e;
        if (static_cast<int>(total) > kMaxDegree)
            throw std::invalid_argument("PolynomialTestFunction: total degree exceeds 6");
        degree_ = std::max(degree_, static_cast<int>(total));
    }
}

PolynomialTestFunction PolynomialTestFunction::from_1d_coefficients(const std::vector<double>& coeffs) {
    std::vector<Monomial> terms;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        if (coeffs[k] == 0.0) continue;
        terms.push_back({coeffs[k], {static_cast<unsigned>(k)}});
    }
    if (coeffs.size() > static_cast<std::size_t>(kMaxDegree) + 1) {
        bool high = false;
        for (std::size_t k = kMaxDegree + 1; k < coeffs.size(); ++k) high = high || coeffs[k] != 0.0;
        if (high) throw std::invalid_argument("PolynomialTestFunction: total degree exceeds 6");
    }
    return PolynomialTestFunction(1, std::move(terms));
}

double PolynomialTestFunction::operator()(const Vec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("PolynomialTestFunction: argument has wrong dimension");
    double acc = 0.0;
    for (const auto& t : terms_) {
        double m = t.coef;
        for (std::size_t i = 0; i < dim_; ++i) {
            for (unsigned e = 0; e < t.exponents[i]; ++e) m *= x[i];
        }
        acc += m;
    }
    return acc;
}

double PolynomialTestFunction::operator()(double x) const {
    if (dim_ != 1) throw std::invalid_argument("PolynomialTestFunction: scalar call on multivariate polynomial");
    Vec v(1);
    v[0] = x;
    return (*this)(v);
}

namespace {

// E[prod z_i^{e_i}] for z ~ N(mu, cov) by the Stein recursion, memoized on the
// exponent tuple.
class GaussianMomentTable {
  public:
    GaussianMomentTable(const Vec& mu, const Mat& cov) : mu_(mu), cov_(cov) {}

    double moment(const std::vector<unsigned>& e) {
        auto it = cache_.find(e);
        if (it != cache_.end()) return it->second;
        std::size_t pivot = e.size();
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] > 0) {
                pivot = i;
                break;
            }
        }
        double value = 1.0;
        if (pivot != e.size()) {
            std::vector<unsigned> rest = e;
            rest[pivot] -= 1;
            value = mu_[pivot] * moment(rest);
            for (std::size_t j = 0; j < e.size(); ++j) {
                if (rest[j] == 0) continue;
                std::vector<unsigned> lower = rest;
                lower[j] -= 1;
                value += cov_(pivot, j) * static_cast<double>(rest[j]) * moment(lower);
            }
        }
        cache_.emplace(e, value);
        return value;
    }

  private:
    const Vec& mu_;
    const Mat& cov_;
    std::map<std::vector<unsigned>, double> cache_;
};

}  // namespace

double gaussian_expectation(const PolynomialTestFunction& g, const Vec& mu, const Mat& cov) {
    if (mu.size() != g.dim() || cov.rows != g.dim() || cov.cols != g.dim())
        throw std::invalid_argument("gaussian_expectation: dimension mismatch");
    GaussianMomentTable table(mu, cov);
    double acc = 0.0;
    for (const auto& t : g.terms()) acc += t.coef * table.moment(t.exponents);
    return acc;
}

double analytic_ou_expectation(const QuadraticGaussianObjective& obj, const PolynomialTestFunction& g,
                               const Vec& x0, double horizon, double eta, double batch) {
    const std::size_t d = obj.dim();
    if (g.dim() != d || x0.size() != d)
        throw std::invalid_argument("analytic_ou_expectation: dimension mismatch");
    if (horizon < 0.0) throw std::invalid_argument("analytic_ou_expectation: horizon must be nonnegative");

    const EigenSym eig = jacobi_eigen(obj.A());
    for (std::size_t i = 0; i < d; ++i) {
        if (eig.values[i] <= 0.0)
            throw std::invalid_argument("analytic_ou_expectation: drift matrix must be positive definite");
    }
    const Mat& v = eig.vectors;

    // Rotate into the eigenbasis of A.
    Vec y0(d), btil(d);
    for (std::size_t i = 0; i < d; ++i) {
        double a = 0.0, bb = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            a += v(r, i) * x0[r];
            bb += v(r, i) * obj.b()[r];
        }
        y0[i] = a;
        btil[i] = bb;
    }
    Mat stil(d, d);
    {
        Mat sv = mat_mul(obj.noise_covariance(Vec(d), batch), v);  // S/batch is x-independent
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double a = 0.0;
                for (std::size_t r = 0; r < d; ++r) a += v(r, i) * sv(r, j);
                stil(i, j) = a;
            }
        }
    }

    Vec mu_t(d);
    Mat cov_t(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        const double li = eig.values[i];
        const double fixed = btil[i] / li;
        mu_t[i] = fixed + std::exp(-li * horizon) * (y0[i] - fixed);
        for (std::size_t j = 0; j < d; ++j) {
            const double rate = li + eig.values[j];
            const double integral = -std::expm1(-rate * horizon) / rate;
            cov_t(i, j) = eta * stil(i, j) * integral;
        }
    }

    // Rotate back to the original coordinates.
    Vec mu(d);
    for (std::size_t r = 0; r < d; ++r) {
        double a = 0.0;
        for (std::size_t i = 0; i < d; ++i) a += v(r, i) * mu_t[i];
        mu[r] = a;
    }
    Mat cov = mat_mul(mat_mul(v, cov_t), transpose(v));
    // Symmetrize away rotation roundoff so the moment recursion sees an exact
    // covariance.
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = r + 1; c < d; ++c) {
            const double s = 0.5 * (cov(r, c) + cov(c, r));
            cov(r, c) = s;
            cov(c, r) = s;
        }
    }
    return gaussian_expectation(g, mu, cov);
}

namespace {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_and_se(const std::vector<double>& vals) {
    MeanSe out;
    const std::size_t n = vals.size();
    double s = 0.0;
    for (double x : vals) s += x;
    out.mean = s / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double x : vals) {
            const double d = x - out.mean;
            ss += d * d;
        }
        out.se = std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(n - 1)));
    }
    return out;
}

}  // namespace

WeakErrorCurve measure_weak_error(const QuadraticGaussianObjective& obj, const PolynomialTestFunction& g,
                                  const Vec& x0, double horizon, double eta,
                                  const std::vector<std::uint64_t>& l_values, std::size_t n_replicas,
                                  std::uint64_t seed, const std::string& experiment_id,
                                  double batch, unsigned n_threads) {
    if (l_values.empty()) throw std::invalid_argument("measure_weak_error: no interpolation levels given");
    if (n_replicas < 2) throw std::invalid_argument("measure_weak_error: need at least 2 replicas");
    for (std::uint64_t l : l_values) {
        if (l < 1) throw std::invalid_argument("measure_weak_error: interpolation parameter l >= 1 required");
        if (std::floor(static_cast<double>(l) * horizon / eta + 1e-9) < 1.0)
            throw std::invalid_argument(
                "measure_weak_error: floor(l * horizon / eta) must be at least one step");
    }

    WeakErrorCurve curve;
    curve.reference = analytic_ou_expectation(obj, g, x0, horizon, eta, batch);

    std::vector<double> gvals(n_replicas);
    for (std::uint64_t l : l_values) {
        const auto steps =
            static_cast<std::uint64_t>(std::floor(static_cast<double>(l) * horizon / eta + 1e-9));
        DynamicsConfig cfg;
        cfg.kind = DynamicsKind::Svag;
        cfg.eta = eta;
        cfg.lambda = 0.0;
        cfg.batch = batch;
        cfg.l = l;
        cfg.mode = SamplingMode::WithReplacement;

        parallel_for(n_replicas, n_threads, [&](std::size_t r) {
            // One stream per replica index, re-derived identically for every l:
            // couples the driving noise across levels.
            SampleStream stream(derive_stream(seed, experiment_id, static_cast<std::uint64_t>(r)));
            Vec x = x0;
            for (std::uint64_t k = 0; k < steps; ++k) step_svag(obj, x, cfg, stream);
            gvals[r] = g(x);
        });
        for (double vv : gvals) {
            if (!std::isfinite(vv)) throw std::runtime_error("measure_weak_error: non-finite observable");
        }
        const MeanSe ms = mean_and_se(gvals);
        WeakErrorPoint p;
        p.l = l;
        p.signed_error = ms.mean - curve.reference;
        p.error = std::abs(p.signed_error);
        p.se = ms.se;
        p.n_replicas = n_replicas;
        p.resolved = p.error > 3.0 * p.se;
        curve.points.push_back(p);
    }
    curve.all_noise_dominated = true;
    for (const auto& p : curve.points) curve.all_noise_dominated = curve.all_noise_dominated && !p.resolved;
    return curve;
}

ReferenceValue fine_em_reference(const StochasticObjective& obj, const PolynomialTestFunction& g,
                                 const Vec& x0, double horizon, double eta, std::uint64_t l_max,
                                 std::size_t n_replicas, std::uint64_t seed,
                                 const std::string& experiment_id, double batch, unsigned n_threads) {
    if (l_max < 1) throw std::invalid_argument("fine_em_reference: l_max >= 1 required");
    if (n_replicas < 2) throw std::invalid_argument("fine_em_reference: need at least 2 replicas");
    const double h = eta / (50.0 * static_cast<double>(l_max));
    const auto n_sub = static_cast<std::uint64_t>(std::llround(horizon / h));
    if (n_sub < 1) throw std::invalid_argument("fine_em_reference: horizon shorter than one substep");

    std::vector<double> gvals(n_replicas);
    parallel_for(n_replicas, n_threads, [&](std::size_t r) {
        Rng rng = derive_stream(seed, experiment_id, static_cast<std::uint64_t>(r));
        NoiseSqrt noise(obj, batch);
        const std::size_t d = obj.dim();
        Vec x = x0, kick(d), z(d);
        for (std::uint64_t k = 0; k < n_sub; ++k) {
            const Vec grad = obj.expected_gradient(x);
            const Mat& m = noise.at(x);
            for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
            for (std::size_t i = 0; i < d; ++i) {
                double a = 0.0;
                for (std::size_t j = 0; j < d; ++j) a += m(i, j) * z[j];
                kick[i] = a;
            }
            const double amp = std::sqrt(h * eta);
            for (std::size_t i = 0; i < d; ++i) x[i] += -h * grad[i] + amp * kick[i];
        }
        gvals[r] = g(x);
    });
    const MeanSe ms = mean_and_se(gvals);
    return {ms.mean, ms.se};
}

OrderFit fit_order(const WeakErrorCurve& curve) {
    std::vector<double> xs, ys, vars;
    for (const auto& p : curve.points) {
        if (!p.resolved || p.error <= 0.0) continue;
        xs.push_back(std::log(static_cast<double>(p.l)));
        ys.push_back(std::log(p.error));
        const double rel = p.se / p.error;
        vars.push_back(std::max(rel * rel, 1e-24));
    }
    const std::size_t n = xs.size();
    if (n < 3)
        throw std::domain_error("fit_order: fewer than 3 points resolved above the noise floor");

    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 1.0 / vars[i];
        sw += w;
        sx += w * xs[i];
        sy += w * ys[i];
        sxx += w * xs[i] * xs[i];
        sxy += w * xs[i] * ys[i];
    }
    const double det = sw * sxx - sx * sx;
    if (det <= 0.0) throw std::domain_error("fit_order: degenerate design (need distinct l values)");

    OrderFit fit;
    fit.n_used = n;
    fit.slope = (sw * sxy - sx * sy) / det;
    fit.intercept = (sxx * sy - sx * sxy) / det;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - fit.intercept - fit.slope * xs[i];
        chi2 += r * r / vars[i];
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double scale = dof > 0.0 ? std::max(1.0, chi2 / dof) : 1.0;
    fit.slope_se = std::sqrt(sw / det * scale);

    static constexpr double kT975[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365,
                                       2.306,  2.262, 2.228, 2.201, 2.179, 2.160, 2.145,
                                       2.131,  2.120, 2.110, 2.101, 2.093, 2.086};
    const auto idof = static_cast<std::size_t>(dof);
    const double t = idof >= 1 && idof <= 20 ? kT975[idof - 1] : 1.96;
    fit.ci_low = fit.slope - t * fit.slope_se;
    fit.ci_high = fit.slope + t * fit.slope_se;
    return fit;
}

void write_weak_error_csv(const std::string& path, const WeakErrorCurve& curve) {
    std::string body = "l,error,stderr,n_replicas\n";
    for (const auto& p : curve.points) {
        body += std::to_string(p.l);
        body += ',';
        csv::append_double(body, p.error);
        body += ',';
        csv::append_double(body, p.se);
        body += ',';
        body += std::to_string(p.n_replicas);
        body += '\n';
    }
    csv::write_text_file(path, body);
}

}  // namespace sdelab
