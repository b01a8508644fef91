#include "sdelab/tail_index.hpp"

#include <cmath>
#include <stdexcept>

#include "sdelab/csv.hpp"
#include "sdelab/parallel.hpp"

namespace sdelab {

TailIndexEstimate estimate_tail_index(const Vec& samples, std::size_t k1, std::size_t k2) {
    if (k1 < 2 || k2 < 2) throw std::invalid_argument("estimate_tail_index: k1, k2 >= 2 required");
    if (samples.size() != k1 * k2)
        throw std::invalid_argument("estimate_tail_index: sample count must equal k1 * k2");

    double sum_log_x = 0.0;
    for (double x : samples) {
        if (x == 0.0) throw std::domain_error("estimate_tail_index: zero sample has no log-moment");
        sum_log_x += std::log(std::abs(x));
    }
    double sum_log_y = 0.0;
    for (std::size_t j = 0; j < k2; ++j) {
        double y = 0.0;
        for (std::size_t i = 0; i < k1; ++i) y += samples[j * k1 + i];
        if (y == 0.0) throw std::domain_error("estimate_tail_index: zero block sum has no log-moment");
        sum_log_y += std::log(std::abs(y));
    }
    TailIndexEstimate est;
    est.k1 = k1;
    est.k2 = k2;
    const double mean_y = sum_log_y / static_cast<double>(k2);
    const double mean_x = sum_log_x / static_cast<double>(k1 * k2);
    est.inv_alpha = (mean_y - mean_x) / std::log(static_cast<double>(k1));
    return est;
}

double expected_gaussian_estimate(std::size_t d, std::size_t m, const Mat& sigma) {
    if (d == 0 || m == 0) throw std::invalid_argument("expected_gaussian_estimate: d, m >= 1 required");
    if (d == 1 && m == 1)
        throw std::invalid_argument("expected_gaussian_estimate: k1 = d * m must exceed 1");
    if (sigma.rows != d || sigma.cols != d)
        throw std::invalid_argument("expected_gaussian_estimate: covariance must be d x d");
    double ones = 0.0, log_diag = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(sigma(i, i) > 0.0))
            throw std::domain_error("expected_gaussian_estimate: diagonal must be strictly positive");
        log_diag += std::log(sigma(i, i));
        for (std::size_t j = 0; j < d; ++j) ones += sigma(i, j);
    }
    if (!(ones > 0.0))
        throw std::domain_error("expected_gaussian_estimate: 1^T sigma 1 must be positive");
    const double md = static_cast<double>(m), dd = static_cast<double>(d);
    return (std::log(md) + std::log(ones) - log_diag / dd) / (2.0 * (std::log(md) + std::log(dd)));
}

TailBiasPoint gaussian_bias_experiment(std::size_t d, double beta, std::size_t k2,
                                       std::size_t repetitions, std::uint64_t seed,
                                       const std::string& experiment_id, unsigned n_threads) {
    if (d < 2) throw std::invalid_argument("gaussian_bias_experiment: d >= 2 required");
    if (k2 < 2) throw std::invalid_argument("gaussian_bias_experiment: k2 >= 2 required");
    if (repetitions < 2)
        throw std::invalid_argument("gaussian_bias_experiment: need at least 2 repetitions");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("gaussian_bias_experiment: beta in [0, 1] required");

    Mat sigma(d, d, beta);
    for (std::size_t i = 0; i < d; ++i) sigma(i, i) = 1.0;

    TailBiasPoint point;
    point.beta = beta;
    point.repetitions = repetitions;
    point.expected = expected_gaussian_estimate(d, 1, sigma);

    const double a = std::sqrt(beta), b = std::sqrt(1.0 - beta);
    std::vector<double> estimates(repetitions);
    parallel_for(repetitions, n_threads, [&](std::size_t rep) {
        Rng rng = derive_stream(seed, experiment_id, static_cast<std::uint64_t>(rep));
        Vec samples(d * k2);
        for (std::size_t j = 0; j < k2; ++j) {
            const double shared = rng.normal();
            for (std::size_t i = 0; i < d; ++i) samples[j * d + i] = a * shared + b * rng.normal();
        }
        estimates[rep] = estimate_tail_index(samples, d, k2).inv_alpha;
    });

    double s = 0.0;
    for (double e : estimates) s += e;
    point.empirical_mean = s / static_cast<double>(repetitions);
    double ss = 0.0;
    for (double e : estimates) {
        const double diff = e - point.empirical_mean;
        ss += diff * diff;
    }
    point.se = std::sqrt(ss / (static_cast<double>(repetitions) *
                               static_cast<double>(repetitions - 1)));
    return point;
}

Vec sample_standard_cauchy(std::size_t n, Rng& rng) {
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double den = 0.0;
        do {
            den = rng.normal();
        } while (den == 0.0);
        out[i] = rng.normal() / den;
    }
    return out;
}

CauchyCheck cauchy_tail_experiment(std::size_t k1, std::size_t k2, std::size_t repetitions,
                                   std::uint64_t seed, const std::string& experiment_id,
                                   unsigned n_threads) {
    if (k1 < 2 || k2 < 2)
        throw std::invalid_argument("cauchy_tail_experiment: k1, k2 >= 2 required");
    if (repetitions < 2)
        throw std::invalid_argument("cauchy_tail_experiment: need at least 2 repetitions");

    std::vector<double> estimates(repetitions);
    parallel_for(repetitions, n_threads, [&](std::size_t rep) {
        Rng rng = derive_stream(seed, experiment_id, static_cast<std::uint64_t>(rep));
        const Vec samples = sample_standard_cauchy(k1 * k2, rng);
        estimates[rep] = estimate_tail_index(samples, k1, k2).inv_alpha;
    });

    CauchyCheck out;
    out.k1 = k1;
    out.k2 = k2;
    out.repetitions = repetitions;
    double s = 0.0;
    for (double e : estimates) s += e;
    out.empirical_mean = s / static_cast<double>(repetitions);
    double ss = 0.0;
    for (double e : estimates) {
        const double diff = e - out.empirical_mean;
        ss += diff * diff;
    }
    out.se = std::sqrt(ss / (static_cast<double>(repetitions) *
                             static_cast<double>(repetitions - 1)));
    return out;
}

void write_tail_bias_csv(const std::string& path, const std::vector<TailBiasPoint>& rows) {
    std::string body = "beta,expected,empirical_mean,stderr,repetitions\n";
    for (const auto& r : rows) {
        csv::append_double(body, r.beta);
        body += ',';
        csv::append_double(body, r.expected);
        body += ',';
        csv::append_double(body, r.empirical_mean);
        body += ',';
        csv::append_double(body, r.se);
        body += ',';
        body += std::to_string(r.repetitions);
        body += '\n';
    }
    csv::write_text_file(path, body);
}

}  // namespace sdelab
