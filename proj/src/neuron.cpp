#include "delaynet/neuron.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace delaynet {

void LifConfig::validate() const {
    if (!(tau_ms > 0.0) || !std::isfinite(tau_ms)) throw InvalidArgument("LIF tau must be positive");
    if (!(u_th > 0.0) || !std::isfinite(u_th)) throw InvalidArgument("LIF threshold must be positive");
    if (!(dt_ms > 0.0) || !std::isfinite(dt_ms)) throw InvalidArgument("LIF dt must be positive");
}

double LifConfig::alpha() const {
    return decay_factor(tau_ms, dt_ms);
}

double decay_factor(double tau_ms, double dt_ms) {
    if (!(tau_ms > 0.0)) throw InvalidArgument("decay_factor: tau must be positive");
    if (!(dt_ms > 0.0)) throw InvalidArgument("decay_factor: dt must be positive");
    return std::exp(-dt_ms / tau_ms);
}

double decay_factor_dtau(double tau_ms, double dt_ms) {
    return dt_ms / (tau_ms * tau_ms) * decay_factor(tau_ms, dt_ms);
}

LifStep lif_step(const MembraneState& state, std::span<const double> input_current,
                 const LifConfig& cfg) {
    cfg.validate();
    const std::size_t n = state.u.size();
    if (input_current.size() != n || state.last_spike.size() != n) {
        throw InvalidArgument("lif_step: state and input lengths differ");
    }
    LifStep out;
    out.state.u.resize(n);
    out.spikes.resize(n);
    const auto& k = kernels::active();
    if (cfg.reset == ResetMode::soft_subtract) {
        k.leak_integrate(cfg.alpha(), state.u.data(), input_current.data(),
                         state.last_spike.data(), cfg.u_th, out.state.u.data(), n);
    } else {
        k.leak_integrate_hard(cfg.alpha(), state.u.data(), input_current.data(),
                              state.last_spike.data(), out.state.u.data(), n);
    }
    k.threshold(out.state.u.data(), cfg.u_th, out.spikes.data(), n);
    out.state.last_spike = out.spikes;
    return out;
}

double surrogate_derivative(double u, double u_th) noexcept {
    return std::min(std::max(u - u_th + 1.0, 0.0), 1.0);
}

double max_sequence_length(unsigned n_bits, double tau_ms, double dt_ms, BoundMode mode) {
    if (n_bits == 0 || n_bits > 53) throw InvalidArgument("max_sequence_length: n_bits must be in [1, 53]");
    const double alpha = decay_factor(tau_ms, dt_ms);
    const double top = std::ldexp(1.0, static_cast<int>(n_bits)) - 1.0;
    if (mode == BoundMode::analytical) return tau_ms * std::log(top);

    double u = top;
    std::uint64_t steps = 0;
    while (u > 1.0) {
        u = std::floor(alpha * u);
        ++steps;
    }
    return static_cast<double>(steps) * dt_ms;
}

std::vector<MemoryBoundRow> memory_bound_surface(std::span<const unsigned> bits,
                                                 std::span<const double> taus_ms, double dt_ms) {
    std::vector<MemoryBoundRow> rows;
    rows.reserve(bits.size() * taus_ms.size());
    for (unsigned b : bits) {
        for (double tau : taus_ms) {
            rows.push_back({b, tau, max_sequence_length(b, tau, dt_ms, BoundMode::analytical),
                            max_sequence_length(b, tau, dt_ms, BoundMode::empirical)});
        }
    }
    return rows;
}

void write_memory_bound_csv(std::ostream& out, std::span<const MemoryBoundRow> rows) {
    out << "n_bits,tau_ms,analytical_ms,empirical_ms\n";
    const auto old_precision = out.precision(17);
    for (const auto& r : rows) {
        out << r.n_bits << ',' << r.tau_ms << ',' << r.analytical_ms << ',' << r.empirical_ms << '\n';
    }
    out.precision(old_precision);
}

} // namespace delaynet
