#include "delaynet/kernels.hpp"

#include <algorithm>

namespace delaynet::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_add_scalar(double a, double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * y[i] + x[i];
}

void leak_integrate_scalar(double alpha, const double* u_prev, const double* current,
                           const std::uint8_t* prev_spikes, double reset, double* u,
                           std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double s = prev_spikes[i] ? 1.0 : 0.0;
        u[i] = (alpha * u_prev[i] + current[i]) - reset * s;
    }
}

void leak_integrate_hard_scalar(double alpha, const double* u_prev, const double* current,
                                const std::uint8_t* prev_spikes, double* u, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double keep = prev_spikes[i] ? 0.0 : 1.0;
        u[i] = (alpha * u_prev[i]) * keep + current[i];
    }
}

std::size_t threshold_scalar(const double* u, double threshold, std::uint8_t* spikes,
                             std::size_t n) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        spikes[i] = u[i] >= threshold ? 1 : 0;
        count += spikes[i];
    }
    return count;
}

void surrogate_scalar(const double* u, double threshold, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::min(std::max(u[i] - threshold + 1.0, 0.0), 1.0);
    }
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{
        "scalar",
        dot_scalar,
        axpy_scalar,
        scale_add_scalar,
        leak_integrate_scalar,
        leak_integrate_hard_scalar,
        threshold_scalar,
        surrogate_scalar,
    };
    return table;
}

} // namespace delaynet::kernels
