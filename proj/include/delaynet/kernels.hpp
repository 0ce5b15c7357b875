#pragma once

// Inner-loop arithmetic for the simulator and its reverse pass.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The variant is picked once at startup from CPUID; set
// DELAYNET_KERNELS=scalar in the environment to force the reference path.
//
// Elementwise kernels are bit-identical across variants. Reductions (dot) and
// fused updates (axpy) may differ in the last few ulps because the vector
// variant reassociates and uses FMA.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace delaynet::kernels {

struct KernelTable {
    std::string_view name;

    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y = a * y + x
    void (*scale_add)(double a, double* y, const double* x, std::size_t n);
    // u = alpha * u_prev + current - reset * prev_spikes
    void (*leak_integrate)(double alpha, const double* u_prev, const double* current,
                           const std::uint8_t* prev_spikes, double reset, double* u,
                           std::size_t n);
    // u = alpha * u_prev * (1 - prev_spikes) + current
    void (*leak_integrate_hard)(double alpha, const double* u_prev, const double* current,
                                const std::uint8_t* prev_spikes, double* u, std::size_t n);
    // spikes[i] = u[i] >= threshold; returns the number of spikes
    std::size_t (*threshold)(const double* u, double threshold, std::uint8_t* spikes,
                             std::size_t n);
    // out[i] = min(max(u[i] - threshold + 1, 0), 1)
    void (*surrogate)(const double* u, double threshold, double* out, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the CPU (or the build) lacks AVX2+FMA.
const KernelTable* avx2_table();

// Table selected for this process.
const KernelTable& active();

// Span front-ends over active().

inline double dot(std::span<const double> x, std::span<const double> y) {
    return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    active().axpy(a, x.data(), y.data(), x.size());
}

inline void scale_add(double a, std::span<double> y, std::span<const double> x) {
    active().scale_add(a, y.data(), x.data(), y.size());
}

inline void surrogate(std::span<const double> u, double threshold, std::span<double> out) {
    active().surrogate(u.data(), threshold, out.data(), u.size());
}

} // namespace delaynet::kernels
