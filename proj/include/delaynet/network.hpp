#pragma once

// Three-layer recurrent spiking network: input weights into a pool of LIF
// neurons, recurrent weights between them with per-neuron transmission
// delays, and a non-spiking leaky readout.
//
// Timing. A spike n_j[t] emitted on tick t travels for L_j = max(d_j, 1) ticks
// and is integrated by postsynaptic neurons through the delayed view
//     nd_j[t'] = n_j[t' - L_j]    (0 for t' < L_j)
//     u[t]     = alpha_R * u[t-1] + W_in x[t] + W_rec nd[t] - u_th * n[t-1]
//     n[t]     = 1(u[t] >= u_th)
//     u_out[t] = alpha_O * u_out[t-1] + W_out n[t]
// A spike cannot reach another membrane in the tick it is emitted, so d = 0
// and d = 1 coincide: both give the usual one-tick recurrent network. All
// state before t = 0 is zero.

#include "delaynet/matrix.hpp"
#include "delaynet/neuron.hpp"
#include "delaynet/spike_train.hpp"
#include "delaynet/topology.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace delaynet {

// Ticks between emission and integration for a delay of d ticks.
constexpr std::size_t transmission_lag(std::size_t delay_steps) noexcept {
    return delay_steps > 0 ? delay_steps : 1;
}

struct NetworkParams {
    Matrix w_in;   // n_hidden x n_in
    Matrix w_rec;  // n_hidden x n_hidden, zero diagonal
    Matrix w_out;  // n_out x n_hidden
    double tau_rec_ms = 20.0;
    double tau_out_ms = 20.0;
    double u_th = 1.0;

    NetworkParams() = default;
    NetworkParams(std::size_t n_in, std::size_t n_hidden, std::size_t n_out)
        : w_in(n_hidden, n_in), w_rec(n_hidden, n_hidden), w_out(n_out, n_hidden) {}

    std::size_t n_in() const noexcept { return w_in.cols(); }
    std::size_t n_hidden() const noexcept { return w_rec.rows(); }
    std::size_t n_out() const noexcept { return w_out.rows(); }

    // Shape consistency and finiteness; throws InvalidArgument.
    void validate() const;

    bool operator==(const NetworkParams&) const = default;
};

struct SimConfig {
    double dt_ms = 1.0;
    ResetMode reset = ResetMode::soft_subtract;
};

// Ring of spike vectors, one slot per tick of the longest delay plus one.
class SpikeBuffer {
public:
    SpikeBuffer(std::size_t n_neurons, std::size_t max_delay_steps);

    // Records the spikes of the current tick.
    void push(std::span<const std::uint8_t> spikes);

    // Spike of neuron j emitted delay ticks before the latest push, 0 before
    // the first push.
    std::uint8_t read(std::size_t neuron, std::size_t delay) const noexcept;

    std::size_t capacity() const noexcept { return capacity_; }

private:
    std::size_t n_;
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<std::uint8_t> slots_;
};

struct ForwardTrace {
    std::size_t steps = 0;
    std::size_t n_in = 0;
    std::size_t n_hidden = 0;
    std::size_t n_out = 0;
    double dt_ms = 1.0;
    ResetMode reset = ResetMode::soft_subtract;
    double alpha_rec = 0.0;
    double alpha_out = 0.0;
    double u_th = 0.0;

    Matrix input;                       // steps x n_in
    Matrix u;                           // steps x n_hidden
    std::vector<std::uint8_t> spikes;   // steps x n_hidden
    std::vector<std::uint8_t> delayed;  // steps x n_hidden, nd[t]
    Matrix u_out;                       // steps x n_out

    std::span<const std::uint8_t> spikes_at(std::size_t t) const noexcept {
        return {spikes.data() + t * n_hidden, n_hidden};
    }
    std::span<const std::uint8_t> delayed_at(std::size_t t) const noexcept {
        return {delayed.data() + t * n_hidden, n_hidden};
    }
    std::size_t spike_count() const noexcept;
    SpikeTrain hidden_spikes() const;
};

// Binary (cue task) input.
ForwardTrace forward(const NetworkParams& params, const DelaySchedule& delays,
                     const SpikeTrain& input, const SimConfig& cfg = {});

// Analog input currents, steps x n_in (sequential pixels).
ForwardTrace forward(const NetworkParams& params, const DelaySchedule& delays,
                     const Matrix& input, const SimConfig& cfg = {});

// Half-open tick range [begin, end).
struct TimeWindow {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const noexcept { return end > begin ? end - begin : 0; }
    bool operator==(const TimeWindow&) const = default;
};

// Mean output membrane over the window, one value per output neuron.
std::vector<double> window_mean_output(const ForwardTrace& trace, TimeWindow window);

// argmax of window_mean_output; ties go to the lower index.
std::size_t readout_decision(const ForwardTrace& trace, TimeWindow window);

// One line per emitted spike: t,neuron,spike
void write_raster_csv(std::ostream& out, const SpikeTrain& spikes);

// Run file layout (little-endian):
//   char[4] "DNRT", u32 version = 1, u64 steps, u32 n_hidden, u32 n_out, f64 dt_ms,
//   f64 u[steps * n_hidden], u8 spikes[steps * n_hidden], f64 u_out[steps * n_out]
void write_run_file(std::ostream& out, const ForwardTrace& trace);

struct RunFile {
    std::size_t steps = 0;
    std::size_t n_hidden = 0;
    std::size_t n_out = 0;
    double dt_ms = 1.0;
    Matrix u;
    std::vector<std::uint8_t> spikes;
    Matrix u_out;
};

RunFile read_run_file(std::istream& in);

} // namespace delaynet
