#include "sdelab/moments.hpp"

#include "sdelab/kernels.hpp"
#include "sdelab/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace sdelab {

namespace {

struct BlockAcc {
    Vec mean;
    Mat second;
    Tensor3 third;
    double e8 = 0.0;
    std::uint64_t n = 0;

    explicit BlockAcc(std::size_t d) : mean(d, 0.0), second(d, d), third(d) {}

    void add(const Vec& dx) {
        const std::size_t d = dx.size();
        kernels::axpy(d, 1.0, dx.data(), mean.data());
        kernels::outer_acc(d, 1.0, dx.data(), second.a.data());
        kernels::tensor3_acc(d, 1.0, dx.data(), third.a.data());
        const double sq = kernels::sq_norm(d, dx.data());
        e8 += sq * sq * sq * sq;
        ++n;
    }

    void finalize() {
        const double inv = 1.0 / static_cast<double>(n);
        kernels::scal(mean.size(), inv, mean.data());
        kernels::scal(second.a.size(), inv, second.a.data());
        kernels::scal(third.a.size(), inv, third.a.data());
        e8 *= inv;
    }
};

// Jackknife SE of the equally weighted block mean for each entry of a vector
// of per-block statistics. For a plain average this reduces to the usual
// between-block formula; it also covers smooth functions of averages.
double jackknife_se(const std::vector<double>& blocks,
                    double (*transform)(double) = nullptr) {
    const std::size_t nb = blocks.size();
    if (nb < 2) return 0.0;
    double total = 0.0;
    for (double b : blocks) total += b;
    std::vector<double> loo(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        double v = (total - blocks[i]) / static_cast<double>(nb - 1);
        loo[i] = transform ? transform(v) : v;
    }
    double m = 0.0;
    for (double v : loo) m += v;
    m /= static_cast<double>(nb);
    double ss = 0.0;
    for (double v : loo) ss += (v - m) * (v - m);
    return std::sqrt(ss * static_cast<double>(nb - 1) / static_cast<double>(nb));
}

double sqrt_clamped(double v) { return std::sqrt(std::max(v, 0.0)); }

}  // namespace

Tensor3 symmetrize(const Tensor3& t) {
    const std::size_t d = t.d;
    Tensor3 out(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k)
                out(i, j, k) = (t(i, j, k) + t(i, k, j) + t(j, i, k) + t(j, k, i) + t(k, i, j) +
                                t(k, j, i)) /
                               6.0;
    return out;
}

ScalarMomentSummary summarize_scalar_moments(const Vec& values, std::size_t n_blocks) {
    const std::size_t n = values.size();
    if (n_blocks < 2) throw std::invalid_argument("summarize_scalar_moments: need n_blocks >= 2");
    if (n < 2 * n_blocks)
        throw std::invalid_argument("summarize_scalar_moments: need at least 2 values per block");

    // Raw power sums per contiguous block; every derived statistic below is a
    // function of pooled sums, so leave-one-block-out estimates are cheap.
    std::vector<double> s1(n_blocks, 0.0), s2(n_blocks, 0.0), s3(n_blocks, 0.0);
    std::vector<std::size_t> cnt(n_blocks, 0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = n * b / n_blocks, hi = n * (b + 1) / n_blocks;
        cnt[b] = hi - lo;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = values[i];
            s1[b] += v;
            s2[b] += v * v;
            s3[b] += v * v * v;
        }
    }
    const auto stats_from = [](double c, double a1, double a2, double a3) {
        const double m = a1 / c;
        const double var = a2 / c - m * m;
        const double third = a3 / c - 3.0 * m * (a2 / c) + 2.0 * m * m * m;
        return std::array<double, 3>{m, var, third};
    };
    double c = 0.0, t1 = 0.0, t2 = 0.0, t3 = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        c += static_cast<double>(cnt[b]);
        t1 += s1[b];
        t2 += s2[b];
        t3 += s3[b];
    }
    const auto full = stats_from(c, t1, t2, t3);

    std::array<std::vector<double>, 3> loo;
    for (auto& v : loo) v.assign(n_blocks, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const auto s = stats_from(c - static_cast<double>(cnt[b]), t1 - s1[b], t2 - s2[b], t3 - s3[b]);
        for (int k = 0; k < 3; ++k) loo[static_cast<std::size_t>(k)][b] = s[static_cast<std::size_t>(k)];
    }
    const auto jack = [&](const std::vector<double>& th) {
        double m = 0.0;
        for (double v : th) m += v;
        m /= static_cast<double>(n_blocks);
        double ss = 0.0;
        for (double v : th) ss += (v - m) * (v - m);
        const double nb = static_cast<double>(n_blocks);
        return std::sqrt((nb - 1.0) / nb * ss);
    };

    ScalarMomentSummary out;
    out.n = n;
    out.mean = full[0];
    out.variance = full[1];
    out.third_central = full[2];
    out.mean_se = jack(loo[0]);
    out.variance_se = jack(loo[1]);
    out.third_se = jack(loo[2]);
    return out;
}

MomentEstimate estimate_one_step_moments(const StochasticObjective& obj, const Vec& x,
                                         const DynamicsConfig& cfg, std::uint64_t n,
                                         std::uint64_t n_blocks, const std::string& experiment_id,
                                         unsigned n_threads) {
    if (n < 10000) throw std::invalid_argument("estimate_one_step_moments: need n >= 10^4");
    if (n_blocks < 2 || n_blocks > n)
        throw std::invalid_argument("estimate_one_step_moments: need 2 <= n_blocks <= n");
    if (obj.dim() > 16)
        throw std::invalid_argument("estimate_one_step_moments: dense third moments are limited "
                                    "to dim <= 16");
    if (cfg.kind != DynamicsKind::Sgd && cfg.kind != DynamicsKind::Svag &&
        cfg.kind != DynamicsKind::Ngd)
        throw std::invalid_argument("estimate_one_step_moments: only discrete dynamics have "
                                    "one-step increments here");

    const std::size_t d = obj.dim();
    std::vector<BlockAcc> blocks(n_blocks, BlockAcc(d));

    parallel_for(n_blocks, n_threads, [&](std::size_t b) {
        SampleStream stream(derive_stream(cfg.seed, experiment_id, b));
        NoiseSqrt noise(obj, cfg.batch);
        const std::uint64_t lo = n * b / n_blocks, hi = n * (b + 1) / n_blocks;
        Vec xx(d), dx(d);
        for (std::uint64_t i = lo; i < hi; ++i) {
            xx = x;
            switch (cfg.kind) {
                case DynamicsKind::Sgd: step_sgd(obj, xx, cfg, stream); break;
                case DynamicsKind::Svag: step_svag(obj, xx, cfg, stream); break;
                default: step_ngd(obj, xx, cfg, stream, noise); break;
            }
            kernels::combine(d, 1.0, xx.data(), -1.0, x.data(), dx.data());
            blocks[b].add(dx);
        }
        blocks[b].finalize();
    });

    MomentEstimate out;
    out.n_samples = n;
    out.n_blocks = n_blocks;
    out.mean.assign(d, 0.0);
    out.mean_se.assign(d, 0.0);
    out.second = Mat(d, d);
    out.second_se = Mat(d, d);
    out.third = Tensor3(d);
    out.third_se = Tensor3(d);

    // Blocks are equally sized by construction (n_blocks divides the ranges
    // within one sample), so the equally weighted block mean is the full mean.
    std::vector<double> scratch(n_blocks);
    auto reduce = [&](auto getter, double& value, double& se) {
        for (std::size_t b = 0; b < n_blocks; ++b) scratch[b] = getter(blocks[b]);
        double s = 0.0;
        for (double v : scratch) s += v;
        value = s / static_cast<double>(n_blocks);
        se = jackknife_se(scratch);
    };

    for (std::size_t i = 0; i < d; ++i)
        reduce([&](const BlockAcc& a) { return a.mean[i]; }, out.mean[i], out.mean_se[i]);
    for (std::size_t i = 0; i < d * d; ++i)
        reduce([&](const BlockAcc& a) { return a.second.a[i]; }, out.second.a[i], out.second_se.a[i]);
    for (std::size_t i = 0; i < d * d * d; ++i)
        reduce([&](const BlockAcc& a) { return a.third.a[i]; }, out.third.a[i], out.third_se.a[i]);

    for (std::size_t b = 0; b < n_blocks; ++b) scratch[b] = blocks[b].e8;
    double s = 0.0;
    for (double v : scratch) s += v;
    out.fourth_norm = std::sqrt(s / static_cast<double>(n_blocks));
    out.fourth_norm_se = jackknife_se(scratch, &sqrt_clamped);
    return out;
}

TheoreticalMoments theoretical_svag_moments(const StochasticObjective& obj, const Vec& x,
                                            double eta, std::uint64_t l, double batch) {
    if (l < 1) throw std::invalid_argument("theoretical_svag_moments: l must be >= 1");
    const std::size_t d = obj.dim();
    const double ld = static_cast<double>(l);
    const Vec g = obj.expected_gradient(x);
    const Mat sigma = obj.noise_covariance(x, batch);
    const Tensor3 lam = obj.noise_third_moment(x, batch);

    TheoreticalMoments th;
    th.mean.assign(d, 0.0);
    kernels::axpy(d, -eta / ld, g.data(), th.mean.data());

    th.second = sigma;
    kernels::scal(th.second.a.size(), eta * eta / ld, th.second.a.data());
    kernels::outer_acc(d, eta * eta / (ld * ld), g.data(), th.second.a.data());

    // Combined two-sample noise has covariance l * Sigma and third cumulant
    // ((3l-1)/2) * Lambda; the raw third moment of -(eta/l) * gradient then
    // expands into the three terms below.
    th.third = Tensor3(d);
    const double c_lam = -(eta * eta * eta / (ld * ld)) * 0.5 * (3.0 - 1.0 / ld);
    const double c_cross = -(eta * eta * eta / (ld * ld));
    const double c_mean = -(eta * eta * eta / (ld * ld * ld));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) {
                double v = c_lam * lam(i, j, k);
                v += c_cross * (sigma(i, j) * g[k] + sigma(i, k) * g[j] + sigma(j, k) * g[i]);
                v += c_mean * g[i] * g[j] * g[k];
                th.third(i, j, k) += v;
            }
    th.has_fourth = false;
    return th;
}

namespace {

// Raw moment E[(a + s w)^m] for standard normal w, m <= 8.
double gauss_raw_moment(double a, double s, int m) {
    static const double dfact[9] = {1, 1, 1, 3, 3, 15, 15, 105, 105};  // (j-1)!! for even j
    double total = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= m; ++j) {
        if (j % 2 == 0) total += binom * std::pow(a, m - j) * std::pow(s, j) * dfact[j];
        binom = binom * (m - j) / (j + 1);
    }
    return total;
}

// E[(sum_i q_i)^4] with q_i = (mu_i + sqrt(lam_i) w_i)^2 over independent
// standard normals; multinomial expansion over d coordinates.
double fourth_power_of_sq_norm(const Vec& mu, const Vec& lam) {
    const std::size_t d = mu.size();
    // per-coordinate E q_i^p for p = 0..4
    std::vector<std::array<double, 5>> m(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double s = std::sqrt(std::max(lam[i], 0.0));
        for (int p = 0; p <= 4; ++p) m[i][p] = gauss_raw_moment(mu[i], s, 2 * p);
    }
    // recursive composition sum with multinomial weights 4! / prod k_i!
    const double fact[5] = {1, 1, 2, 6, 24};
    double total = 0.0;
    std::vector<int> k(d, 0);
    auto rec = [&](auto&& self, std::size_t i, int remaining, double prod) -> void {
        if (i + 1 == d) {
            total += prod * m[i][remaining] / fact[remaining];
            return;
        }
        for (int p = 0; p <= remaining; ++p)
            self(self, i + 1, remaining - p, prod * m[i][p] / fact[p]);
    };
    if (d == 0) return 0.0;
    rec(rec, 0, 4, 24.0);
    return total;
}

}  // namespace

TheoreticalMoments theoretical_sde_moments(const QuadraticGaussianObjective& obj, const Vec& x,
                                           double eta, std::uint64_t l, double batch) {
    if (l < 1) throw std::invalid_argument("theoretical_sde_moments: l must be >= 1");
    const std::size_t d = obj.dim();
    const double h = eta / static_cast<double>(l);
    const EigenSym ea = jacobi_eigen(obj.A());

    // Work in the eigenbasis of A: y = V^T (x - A^{-1} b).
    Vec bt(d), y(d);
    kernels::matvec(d, d, transpose(ea.vectors).a.data(), obj.b().data(), bt.data());
    Vec xt(d);
    kernels::matvec(d, d, transpose(ea.vectors).a.data(), x.data(), xt.data());
    for (std::size_t i = 0; i < d; ++i) y[i] = xt[i] - bt[i] / ea.values[i];

    // Mean of the increment over time h.
    Vec mu_t(d);
    for (std::size_t i = 0; i < d; ++i) mu_t[i] = (std::exp(-ea.values[i] * h) - 1.0) * y[i];
    TheoreticalMoments th;
    th.mean.assign(d, 0.0);
    kernels::matvec(d, d, ea.vectors.a.data(), mu_t.data(), th.mean.data());

    // Covariance of the increment: integral of e^{-A s} (eta Sigma_B) e^{-A s}.
    const Mat sigma = obj.noise_covariance(x, batch);
    const Mat st = mat_mul(transpose(ea.vectors), mat_mul(sigma, ea.vectors));
    Mat ct(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double rate = ea.values[i] + ea.values[j];
            const double integral = (rate > 1e-300) ? (1.0 - std::exp(-rate * h)) / rate : h;
            ct(i, j) = eta * st(i, j) * integral;
        }
    const Mat cov = mat_mul(ea.vectors, mat_mul(ct, transpose(ea.vectors)));

    th.second = cov;
    kernels::outer_acc(d, 1.0, th.mean.data(), th.second.a.data());

    th.third = Tensor3(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k)
                th.third(i, j, k) = th.mean[i] * th.mean[j] * th.mean[k] +
                                    th.mean[i] * cov(j, k) + th.mean[j] * cov(i, k) +
                                    th.mean[k] * cov(i, j);

    // sqrt(E |increment|^8) via the spectral decomposition of the covariance.
    const EigenSym ec = jacobi_eigen(cov);
    Vec mu_c(d);
    kernels::matvec(d, d, transpose(ec.vectors).a.data(), th.mean.data(), mu_c.data());
    Vec lam(d);
    for (std::size_t i = 0; i < d; ++i) lam[i] = std::max(ec.values[i], 0.0);
    th.fourth_norm = std::sqrt(fourth_power_of_sq_norm(mu_c, lam));
    th.has_fourth = true;
    return th;
}

namespace {

double z_score(double est, double th, double se) {
    const double diff = est - th;
    if (diff == 0.0) return 0.0;
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return diff / se;
}

}  // namespace

MomentReport compare_moments(const MomentEstimate& est, const TheoreticalMoments& th,
                             double z_max) {
    const std::size_t d = est.mean.size();
    if (th.mean.size() != d) throw std::invalid_argument("compare_moments: dimension mismatch");
    MomentReport r;
    r.z_max = z_max;
    for (std::size_t i = 0; i < d; ++i)
        r.max_z_mean = std::max(r.max_z_mean, std::abs(z_score(est.mean[i], th.mean[i], est.mean_se[i])));
    for (std::size_t i = 0; i < d * d; ++i)
        r.max_z_second =
            std::max(r.max_z_second, std::abs(z_score(est.second.a[i], th.second.a[i], est.second_se.a[i])));
    for (std::size_t i = 0; i < d * d * d; ++i)
        r.max_z_third =
            std::max(r.max_z_third, std::abs(z_score(est.third.a[i], th.third.a[i], est.third_se.a[i])));
    r.pass = std::max({r.max_z_mean, r.max_z_second, r.max_z_third}) <= z_max;
    return r;
}

std::string format_moment_table(const MomentEstimate& est, const TheoreticalMoments& th,
                                const MomentReport& report) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-10s %-12s %-14s %-14s %-12s %-8s\n", "order", "entry",
                  "estimate", "theory", "stderr", "z");
    out += buf;
    const std::size_t d = est.mean.size();
    auto row = [&](const char* order, const std::string& entry, double e, double t, double se) {
        const double z = z_score(e, t, se);
        std::snprintf(buf, sizeof buf, "%-10s %-12s %-14.6g %-14.6g %-12.3g %-8.2f\n", order,
                      entry.c_str(), e, t, se, z);
        out += buf;
    };
    for (std::size_t i = 0; i < d; ++i)
        row("mean", "[" + std::to_string(i) + "]", est.mean[i], th.mean[i], est.mean_se[i]);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j)
            row("second", "[" + std::to_string(i) + "," + std::to_string(j) + "]", est.second(i, j),
                th.second(i, j), est.second_se(i, j));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j)
            for (std::size_t k = j; k < d; ++k)
                row("third",
                    "[" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + "]",
                    est.third(i, j, k), th.third(i, j, k), est.third_se(i, j, k));
    std::snprintf(buf, sizeof buf, "max |z|: mean %.2f, second %.2f, third %.2f (limit %.1f) -> %s\n",
                  report.max_z_mean, report.max_z_second, report.max_z_third, report.z_max,
                  report.pass ? "pass" : "FAIL");
    out += buf;
    const double entries = static_cast<double>(d + d * d + d * d * d);
    std::snprintf(buf, sizeof buf,
                  "note: the |z| <= %.1f gate is per entry (two-sided p ~ 6.3e-05); across all %.0f "
                  "entries the Bonferroni-corrected family false-alarm rate stays below %.2g\n",
                  report.z_max, entries, entries * 6.334e-5);
    out += buf;
    return out;
}

}  // namespace sdelab
