#include "delaynet/analysis.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/kernels.hpp"
#include "delaynet/rng.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>

namespace delaynet {

namespace {

// The FFTW planner is not reentrant.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>> real_dft(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> half(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                    reinterpret_cast<fftw_complex*>(half.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    std::vector<std::complex<double>> full(n);
    for (std::size_t k = 0; k < half.size(); ++k) full[k] = half[k];
    for (std::size_t k = half.size(); k < n; ++k) full[k] = std::conj(half[n - k]);
    return full;
}

} // namespace

Spectrum signal_spectrum(std::span<const double> signal, double dt_ms, SpectrumWindow window) {
    const std::size_t n = signal.size();
    if (n < 2) throw InvalidArgument("spectrum: need at least two samples");
    if (!(dt_ms > 0.0)) throw InvalidArgument("spectrum: dt must be positive");

    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) {
        double w = 1.0;
        if (window == SpectrumWindow::hann) {
            w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n - 1));
        }
        x[t] = (signal[t] - mean) * w;
    }
    const auto X = real_dft(x);

    Spectrum s;
    s.frequencies_hz.resize(n);
    s.magnitudes.resize(n);
    const double fs_hz = 1000.0 / dt_ms;
    const auto shift = static_cast<std::ptrdiff_t>(n / 2);
    for (std::size_t i = 0; i < n; ++i) {
        // bin index k in [-n/2, n - n/2)
        const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(i) - shift;
        const std::size_t src = static_cast<std::size_t>((k + static_cast<std::ptrdiff_t>(n)) % static_cast<std::ptrdiff_t>(n));
        s.frequencies_hz[i] = static_cast<double>(k) * fs_hz / static_cast<double>(n);
        s.magnitudes[i] = std::abs(X[src]);
    }
    return s;
}

Spectrum spike_rate_spectrum(const SpikeTrain& spikes, double dt_ms, const SpectrumOptions& opts) {
    TimeWindow range{0, spikes.steps};
    if (opts.range) {
        range = *opts.range;
        if (range.end > spikes.steps) throw InvalidArgument("spectrum: range past end of spike train");
    }
    if (range.length() < 2) throw InvalidArgument("spectrum: need at least two timesteps");
    std::vector<double> rate(range.length());
    for (std::size_t t = range.begin; t < range.end; ++t) {
        std::size_t c = 0;
        for (auto b : spikes.row(t)) c += b;
        rate[t - range.begin] = static_cast<double>(c);
    }
    return signal_spectrum(rate, dt_ms, opts.window);
}

void write_spectrum_csv(std::ostream& out, const Spectrum& s) {
    out << "frequency_hz,magnitude\n";
    const auto old = out.precision(12);
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) out << s.frequencies_hz[i] << ',' << s.magnitudes[i] << '\n';
    out.precision(old);
}

SpectralRadiusNotConverged::SpectralRadiusNotConverged(double last_estimate, std::size_t iterations)
    : std::runtime_error("spectral_radius: no convergence after " + std::to_string(iterations) +
                         " iterations (last estimate " + std::to_string(last_estimate) + ")"),
      last_estimate_(last_estimate) {}

namespace {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < w.rows(); ++r) y[r] = kernels::dot(w.row(r), x);
}

double norm2(std::span<const double> v) {
    return std::sqrt(kernels::dot(v, v));
}

// Largest eigenvalue modulus by elimination to upper Hessenberg form followed
// by Francis double-shift QR with deflation. Returns nullopt if a block fails
// to split within 30 sweeps.
std::optional<double> qr_spectral_radius(const Matrix& w) {
    const int n = static_cast<int>(w.rows());
    // 1-based storage keeps the index arithmetic of the classic formulation.
    std::vector<double> store(static_cast<std::size_t>((n + 1) * (n + 1)), 0.0);
    auto a = [&](int i, int j) -> double& { return store[static_cast<std::size_t>(i * (n + 1) + j)]; };
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) a(i, j) = w(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1));

    for (int m = 2; m < n; ++m) {
        double x = 0.0;
        int i = m;
        for (int j = m; j <= n; ++j) {
            if (std::abs(a(j, m - 1)) > std::abs(x)) {
                x = a(j, m - 1);
                i = j;
            }
        }
        if (i != m) {
            for (int j = m - 1; j <= n; ++j) std::swap(a(i, j), a(m, j));
            for (int j = 1; j <= n; ++j) std::swap(a(j, i), a(j, m));
        }
        if (x != 0.0) {
            for (i = m + 1; i <= n; ++i) {
                double y = a(i, m - 1);
                if (y == 0.0) continue;
                y /= x;
                a(i, m - 1) = y;
                for (int j = m; j <= n; ++j) a(i, j) -= y * a(m, j);
                for (int j = 1; j <= n; ++j) a(j, m) += y * a(j, i);
            }
        }
    }
    for (int i = 3; i <= n; ++i)
        for (int j = 1; j < i - 1; ++j) a(i, j) = 0.0;

    double rho = 0.0;
    auto record = [&](double re, double im) { rho = std::max(rho, std::hypot(re, im)); };

    double anorm = 0.0;
    for (int i = 1; i <= n; ++i)
        for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));
    int nn = n;
    double t = 0.0;
    while (nn >= 1) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l >= 2; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) + s == s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = a(nn, nn);
            if (l == nn) {
                record(x + t, 0.0);
                --nn;
                continue;
            }
            double y = a(nn - 1, nn - 1);
            double w2 = a(nn, nn - 1) * a(nn - 1, nn);
            if (l == nn - 1) {
                const double p = 0.5 * (y - x);
                const double q = p * p + w2;
                double z = std::sqrt(std::abs(q));
                x += t;
                if (q >= 0.0) {
                    z = p + std::copysign(z, p);
                    record(x + z, 0.0);
                    record(z != 0.0 ? x - w2 / z : x + z, 0.0);
                } else {
                    record(x + p, z);
                }
                nn -= 2;
                continue;
            }
            if (its == 30) return std::nullopt;
            if (its == 10 || its == 20) {
                // Exceptional shift.
                t += x;
                for (int i = 1; i <= nn; ++i) a(i, i) -= x;
                const double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                y = x = 0.75 * s;
                w2 = -0.4375 * s * s;
            }
            ++its;
            int m = nn - 2;
            double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
            for (; m >= l; --m) {
                z = a(m, m);
                r = x - z;
                double s = y - z;
                p = (r * s - w2) / a(m + 1, m) + a(m, m + 1);
                q = a(m + 1, m + 1) - z - r - s;
                r = a(m + 2, m + 1);
                s = std::abs(p) + std::abs(q) + std::abs(r);
                p /= s;
                q /= s;
                r /= s;
                if (m == l) break;
                const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
                if (u + v == v) break;
            }
            for (int i = m + 2; i <= nn; ++i) {
                a(i, i - 2) = 0.0;
                if (i != m + 2) a(i, i - 3) = 0.0;
            }
            for (int k = m; k <= nn - 1; ++k) {
                if (k != m) {
                    p = a(k, k - 1);
                    q = a(k + 1, k - 1);
                    r = k != nn - 1 ? a(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x != 0.0) {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                const double s = std::copysign(std::sqrt(p * p + q * q + r * r), p);
                if (s == 0.0) continue;
                if (k == m) {
                    if (l != m) a(k, k - 1) = -a(k, k - 1);
                } else {
                    a(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for (int j = k; j <= nn; ++j) {
                    p = a(k, j) + q * a(k + 1, j);
                    if (k != nn - 1) {
                        p += r * a(k + 2, j);
                        a(k + 2, j) -= p * z;
                    }
                    a(k + 1, j) -= p * y;
                    a(k, j) -= p * x;
                }
                const int mmin = std::min(nn, k + 3);
                for (int i = l; i <= mmin; ++i) {
                    p = x * a(i, k) + y * a(i, k + 1);
                    if (k != nn - 1) {
                        p += z * a(i, k + 2);
                        a(i, k + 2) -= p * r;
                    }
                    a(i, k + 1) -= p * q;
                    a(i, k) -= p;
                }
            }
        } while (l < nn - 1);
    }
    return rho;
}

} // namespace

double spectral_radius(const Matrix& w, const SpectralRadiusOptions& opts) {
    if (w.rows() != w.cols()) throw InvalidArgument("spectral_radius: matrix must be square");
    const std::size_t n = w.rows();
    if (n == 0) return 0.0;
    for (double v : w.values())
        if (!std::isfinite(v)) throw InvalidArgument("spectral_radius: matrix must be finite");

    std::vector<double> x(n), y1(n), y2(n);
    Rng rng(0x5eedULL);
    for (double& v : x) v = uniform(rng, 0.5, 1.5) * ((rng() >> 63) ? 1.0 : -1.0);
    {
        const double nx = norm2(x);
        for (double& v : x) v /= nx;
    }

    double estimate = 0.0;
    double previous = -1.0;
    int stable = 0;
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        matvec(w, x, y1);
        const double n1 = norm2(y1);
        if (n1 == 0.0) return 0.0;
        matvec(w, y1, y2);
        const double n2 = norm2(y2);
        if (n2 == 0.0) return 0.0;

        // One-step Rayleigh estimate.
        const double mu = kernels::dot(x, y1);
        double r1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) r1 += (y1[i] - mu * x[i]) * (y1[i] - mu * x[i]);
        r1 = std::sqrt(r1) / n1;

        // Two-step recurrence fit y2 ~ c1 y1 + c0 x.
        const double g00 = n1 * n1;
        const double g01 = mu;
        const double g11 = 1.0;
        const double det = g00 * g11 - g01 * g01;
        estimate = std::abs(mu);
        double residual = r1;
        if (r1 > 1e-10 && det > 1e-12 * g00) {
            const double b0 = kernels::dot(y1, y2);
            const double b1 = kernels::dot(x, y2);
            const double c1 = (b0 * g11 - g01 * b1) / det;
            const double c0 = (g00 * b1 - g01 * b0) / det;
            residual = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = y2[i] - c1 * y1[i] - c0 * x[i];
                residual += e * e;
            }
            residual = std::sqrt(residual) / n2;
            const double disc = c1 * c1 + 4.0 * c0;
            if (disc < 0.0) {
                estimate = std::sqrt(-c0);
            } else {
                const double s = std::sqrt(disc);
                estimate = std::max(std::abs(0.5 * (c1 + s)), std::abs(0.5 * (c1 - s)));
            }
        }

        // A periodic orbit can hold the estimate still without the fit being
        // exact, so a stable estimate alone is not convergence.
        const bool fitted = residual <= std::sqrt(opts.rel_tol);
        if (fitted && previous >= 0.0 && std::abs(estimate - previous) <= opts.rel_tol * estimate) {
            if (++stable >= 3) return estimate;
        } else {
            stable = 0;
        }
        previous = estimate;
        for (std::size_t i = 0; i < n; ++i) x[i] = y2[i] / n2;
        if (it + 1 == opts.stagnation_window) {
            if (auto rho = qr_spectral_radius(w)) return *rho;
            break;
        }
    }
    throw SpectralRadiusNotConverged(estimate, opts.max_iterations);
}

} // namespace delaynet
