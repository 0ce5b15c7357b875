#include "delaynet/network.hpp"

#include "delaynet/binary_io.hpp"
#include "delaynet/errors.hpp"
#include "delaynet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace delaynet {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ForwardTrace simulate(const NetworkParams& params, const DelaySchedule& delays, Matrix input,
                      const SimConfig& cfg) {
    params.validate();
    const std::size_t n = params.n_hidden();
    const std::size_t n_out = params.n_out();
    const std::size_t steps = input.rows();
    if (input.cols() != params.n_in()) {
        throw InvalidArgument("forward: input has " + std::to_string(input.cols()) +
                              " channels, network expects " + std::to_string(params.n_in()));
    }
    if (delays.size() != n) throw InvalidArgument("forward: delay schedule length differs from hidden size");

    ForwardTrace tr;
    tr.steps = steps;
    tr.n_in = params.n_in();
    tr.n_hidden = n;
    tr.n_out = n_out;
    tr.dt_ms = cfg.dt_ms;
    tr.reset = cfg.reset;
    tr.alpha_rec = decay_factor(params.tau_rec_ms, cfg.dt_ms);
    tr.alpha_out = decay_factor(params.tau_out_ms, cfg.dt_ms);
    tr.u_th = params.u_th;
    tr.input = std::move(input);
    tr.u = Matrix(steps, n);
    tr.spikes.assign(steps * n, 0);
    tr.delayed.assign(steps * n, 0);
    tr.u_out = Matrix(steps, n_out);

    // Presynaptic-major copies so sparse spikes accumulate contiguous rows.
    const Matrix w_in_t = params.w_in.transposed();
    const Matrix w_rec_t = params.w_rec.transposed();
    const auto& k = kernels::active();

    SpikeBuffer buffer(n, delays.max_steps());
    std::vector<double> current(n);
    std::vector<double> u_prev(n, 0.0);
    std::vector<std::uint8_t> n_prev(n, 0);
    std::vector<double> out_prev(n_out, 0.0);
    std::vector<std::size_t> active;
    active.reserve(n);

    for (std::size_t t = 0; t < steps; ++t) {
        std::fill(current.begin(), current.end(), 0.0);
        const auto x = tr.input.row(t);
        for (std::size_t c = 0; c < x.size(); ++c) {
            if (x[c] != 0.0) k.axpy(x[c], w_in_t.row(c).data(), current.data(), n);
        }
        // The latest push is tick t - 1, so a lag of L ticks is L - 1 pushes back.
        std::uint8_t* delayed = tr.delayed.data() + t * n;
        for (std::size_t j = 0; j < n; ++j) {
            delayed[j] = buffer.read(j, transmission_lag(delays.delay_steps[j]) - 1);
            if (delayed[j]) k.axpy(1.0, w_rec_t.row(j).data(), current.data(), n);
        }

        auto u = tr.u.row(t);
        if (cfg.reset == ResetMode::soft_subtract) {
            k.leak_integrate(tr.alpha_rec, u_prev.data(), current.data(), n_prev.data(), params.u_th,
                             u.data(), n);
        } else {
            k.leak_integrate_hard(tr.alpha_rec, u_prev.data(), current.data(), n_prev.data(), u.data(), n);
        }
        if (!all_finite(u)) throw NumericalDivergence("forward: non-finite hidden membrane", t);

        std::uint8_t* spikes = tr.spikes.data() + t * n;
        k.threshold(u.data(), params.u_th, spikes, n);
        buffer.push({spikes, n});

        active.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (spikes[j]) active.push_back(j);
        auto out = tr.u_out.row(t);
        for (std::size_t o = 0; o < n_out; ++o) {
            const auto w = params.w_out.row(o);
            double drive = 0.0;
            for (std::size_t j : active) drive += w[j];
            out[o] = tr.alpha_out * out_prev[o] + drive;
        }
        if (!all_finite(out)) throw NumericalDivergence("forward: non-finite output membrane", t);

        std::copy(u.begin(), u.end(), u_prev.begin());
        std::copy(spikes, spikes + n, n_prev.begin());
        std::copy(out.begin(), out.end(), out_prev.begin());
    }
    return tr;
}

} // namespace

void NetworkParams::validate() const {
    const std::size_t n = w_rec.rows();
    if (w_rec.cols() != n) throw InvalidArgument("recurrent weights must be square");
    if (w_in.rows() != n) throw InvalidArgument("input weights must have one row per hidden neuron");
    if (w_out.cols() != n) throw InvalidArgument("output weights must have one column per hidden neuron");
    for (const Matrix* m : {&w_in, &w_rec, &w_out}) {
        if (!all_finite(m->values())) throw InvalidArgument("network weights must be finite");
    }
    if (!(tau_rec_ms > 0.0) || !(tau_out_ms > 0.0)) throw InvalidArgument("time constants must be positive");
    if (!std::isfinite(u_th)) throw InvalidArgument("threshold must be finite");
}

SpikeBuffer::SpikeBuffer(std::size_t n_neurons, std::size_t max_delay_steps)
    : n_(n_neurons), capacity_(max_delay_steps + 1), slots_(capacity_ * n_neurons, 0) {}

void SpikeBuffer::push(std::span<const std::uint8_t> spikes) {
    cursor_ = (cursor_ + 1) % capacity_;
    std::copy(spikes.begin(), spikes.end(), slots_.begin() + static_cast<std::ptrdiff_t>(cursor_ * n_));
}

std::uint8_t SpikeBuffer::read(std::size_t neuron, std::size_t delay) const noexcept {
    if (delay >= capacity_) return 0;
    const std::size_t slot = (cursor_ + capacity_ - delay) % capacity_;
    return slots_[slot * n_ + neuron];
}

std::size_t ForwardTrace::spike_count() const noexcept {
    std::size_t c = 0;
    for (auto s : spikes) c += s;
    return c;
}

SpikeTrain ForwardTrace::hidden_spikes() const {
    SpikeTrain s(steps, n_hidden, dt_ms);
    s.bits = spikes;
    return s;
}

ForwardTrace forward(const NetworkParams& params, const DelaySchedule& delays,
                     const SpikeTrain& input, const SimConfig& cfg) {
    Matrix x(input.steps, input.channels);
    for (std::size_t i = 0; i < input.bits.size(); ++i) x.values()[i] = input.bits[i] ? 1.0 : 0.0;
    return simulate(params, delays, std::move(x), cfg);
}

ForwardTrace forward(const NetworkParams& params, const DelaySchedule& delays,
                     const Matrix& input, const SimConfig& cfg) {
    return simulate(params, delays, input, cfg);
}

std::vector<double> window_mean_output(const ForwardTrace& trace, TimeWindow window) {
    if (window.length() == 0) throw InvalidArgument("readout: empty recall window");
    if (window.end > trace.steps) throw InvalidArgument("readout: recall window past end of trace");
    std::vector<double> mean(trace.n_out, 0.0);
    for (std::size_t t = window.begin; t < window.end; ++t) {
        const auto row = trace.u_out.row(t);
        for (std::size_t o = 0; o < trace.n_out; ++o) mean[o] += row[o];
    }
    for (double& m : mean) m /= static_cast<double>(window.length());
    return mean;
}

std::size_t readout_decision(const ForwardTrace& trace, TimeWindow window) {
    const auto mean = window_mean_output(trace, window);
    std::size_t best = 0;
    for (std::size_t o = 1; o < mean.size(); ++o)
        if (mean[o] > mean[best]) best = o;
    return best;
}

void write_raster_csv(std::ostream& out, const SpikeTrain& spikes) {
    out << "t,neuron,spike\n";
    for (std::size_t t = 0; t < spikes.steps; ++t) {
        const auto row = spikes.row(t);
        for (std::size_t j = 0; j < row.size(); ++j)
            if (row[j]) out << t << ',' << j << ",1\n";
    }
}

void write_run_file(std::ostream& out, const ForwardTrace& trace) {
    binary::write_magic(out, "DNRT");
    binary::write<std::uint32_t>(out, 1);
    binary::write<std::uint64_t>(out, trace.steps);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(trace.n_hidden));
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(trace.n_out));
    binary::write<double>(out, trace.dt_ms);
    binary::write_array<double>(out, trace.u.values());
    binary::write_array<std::uint8_t>(out, trace.spikes);
    binary::write_array<double>(out, trace.u_out.values());
}

RunFile read_run_file(std::istream& in) {
    try {
        binary::expect_magic(in, "DNRT");
        if (binary::read<std::uint32_t>(in) != 1) throw std::runtime_error("unsupported run file version");
        RunFile r;
        r.steps = binary::read<std::uint64_t>(in);
        r.n_hidden = binary::read<std::uint32_t>(in);
        r.n_out = binary::read<std::uint32_t>(in);
        r.dt_ms = binary::read<double>(in);
        r.u = Matrix(r.steps, r.n_hidden);
        r.spikes.resize(r.steps * r.n_hidden);
        r.u_out = Matrix(r.steps, r.n_out);
        binary::read_array<double>(in, r.u.values());
        binary::read_array<std::uint8_t>(in, r.spikes);
        binary::read_array<double>(in, r.u_out.values());
        return r;
    } catch (const std::runtime_error& e) {
        throw InvalidArgument(std::string("run file: ") + e.what());
    }
}

} // namespace delaynet
