#pragma once

// Leaky integrate-and-fire dynamics on a fixed clock, the piecewise-linear
// surrogate derivative, and the fixed-point memory bound of a leaking membrane.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace delaynet {

enum class ResetMode { soft_subtract, hard_zero };

struct LifConfig {
    double tau_ms = 20.0;
    double u_th = 1.0;
    double dt_ms = 1.0;
    ResetMode reset = ResetMode::soft_subtract;

    // Throws InvalidArgument unless tau, u_th and dt are all positive and finite.
    void validate() const;
    double alpha() const;
};

struct MembraneState {
    std::vector<double> u;
    std::vector<std::uint8_t> last_spike;

    static MembraneState at_rest(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)}; }
};

struct LifStep {
    MembraneState state;
    std::vector<std::uint8_t> spikes;
};

// exp(-dt / tau). Throws InvalidArgument for non-positive arguments.
double decay_factor(double tau_ms, double dt_ms);

// d/dtau exp(-dt / tau) = dt / tau^2 * exp(-dt / tau)
double decay_factor_dtau(double tau_ms, double dt_ms);

// One clock tick: decay, integrate, reset by the previous spike, then threshold
// (u >= u_th fires). Soft reset subtracts u_th; hard reset zeroes the decayed
// potential of neurons that spiked on the previous tick.
LifStep lif_step(const MembraneState& state, std::span<const double> input_current,
                 const LifConfig& cfg);

// min(max(u - u_th + 1, 0), 1)
double surrogate_derivative(double u, double u_th) noexcept;

enum class BoundMode { analytical, empirical };

// Longest interval a membrane holding the largest n_bits integer can decay
// before reaching 1. Analytical: tau * ln(2^n_bits - 1). Empirical: repeatedly
// floor(alpha * u) from 2^n_bits - 1 and count ticks while u > 1.
// n_bits must be in [1, 53].
double max_sequence_length(unsigned n_bits, double tau_ms, double dt_ms, BoundMode mode);

struct MemoryBoundRow {
    unsigned n_bits = 0;
    double tau_ms = 0.0;
    double analytical_ms = 0.0;
    double empirical_ms = 0.0;
};

std::vector<MemoryBoundRow> memory_bound_surface(std::span<const unsigned> bits,
                                                 std::span<const double> taus_ms, double dt_ms);

// Header: n_bits,tau_ms,analytical_ms,empirical_ms
void write_memory_bound_csv(std::ostream& out, std::span<const MemoryBoundRow> rows);

} // namespace delaynet
