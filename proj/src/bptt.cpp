#include "delaynet/bptt.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace delaynet {

namespace {

double sum_squares(std::span<const double> v) {
    return kernels::dot(v, v);
}

} // namespace

Gradients Gradients::zeros_like(const NetworkParams& params) {
    Gradients g;
    g.d_w_in = Matrix(params.w_in.rows(), params.w_in.cols());
    g.d_w_rec = Matrix(params.w_rec.rows(), params.w_rec.cols());
    g.d_w_out = Matrix(params.w_out.rows(), params.w_out.cols());
    return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    auto add = [](Matrix& a, const Matrix& b) {
        if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("gradient shape mismatch");
        auto av = a.values();
        auto bv = b.values();
        for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
    };
    add(d_w_in, other.d_w_in);
    add(d_w_rec, other.d_w_rec);
    add(d_w_out, other.d_w_out);
    d_tau_rec += other.d_tau_rec;
    d_tau_out += other.d_tau_out;
    d_u_th += other.d_u_th;
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (Matrix* m : {&d_w_in, &d_w_rec, &d_w_out})
        for (double& v : m->values()) v *= s;
    d_tau_rec *= s;
    d_tau_out *= s;
    d_u_th *= s;
    return *this;
}

double Gradients::squared_norm() const {
    return sum_squares(d_w_in.values()) + sum_squares(d_w_rec.values()) + sum_squares(d_w_out.values()) +
           d_tau_rec * d_tau_rec + d_tau_out * d_tau_out + d_u_th * d_u_th;
}

double Gradients::norm() const {
    return std::sqrt(squared_norm());
}

bool Gradients::all_finite() const {
    for (const Matrix* m : {&d_w_in, &d_w_rec, &d_w_out})
        for (double v : m->values())
            if (!std::isfinite(v)) return false;
    return std::isfinite(d_tau_rec) && std::isfinite(d_tau_out) && std::isfinite(d_u_th);
}

Gradients backward(const ForwardTrace& trace, const NetworkParams& params,
                   const DelaySchedule& delays, const LossAdjoints& adjoints) {
    const std::size_t steps = trace.steps;
    const std::size_t n = trace.n_hidden;
    const std::size_t n_out = trace.n_out;
    const std::size_t n_in = trace.n_in;
    if (params.n_hidden() != n || params.n_out() != n_out || params.n_in() != n_in) {
        throw InvalidArgument("backward: parameters do not match the trace");
    }
    if (delays.size() != n) throw InvalidArgument("backward: delay schedule does not match the trace");
    if (adjoints.d_u_out.rows() != steps || adjoints.d_u_out.cols() != n_out) {
        throw InvalidArgument("backward: output adjoints must be steps x n_out");
    }
    const bool has_spike_adjoint = !adjoints.d_spikes.empty();
    if (has_spike_adjoint && (adjoints.d_spikes.rows() != steps || adjoints.d_spikes.cols() != n)) {
        throw InvalidArgument("backward: spike adjoints must be steps x n_hidden");
    }

    const auto& k = kernels::active();
    const bool soft = trace.reset == ResetMode::soft_subtract;
    const double alpha_r = trace.alpha_rec;
    const double alpha_o = trace.alpha_out;
    const double th = trace.u_th;
    const Matrix w_rec_t = params.w_rec.transposed();

    // Accumulated presynaptic-major so sparse updates touch contiguous rows.
    Matrix d_w_in_t(n_in, n);
    Matrix d_w_rec_t(n, n);
    Matrix d_w_out(n_out, n);
    double d_alpha_rec = 0.0;
    double d_alpha_out = 0.0;
    double d_th = 0.0;

    Matrix adj_u(steps, n);  // full history, read back at t + lag_j
    std::vector<double> adj_u_next(n, 0.0);
    std::vector<double> adj_out(n_out, 0.0);
    std::vector<double> d_spike(n);
    std::vector<double> h(n);
    std::vector<double> leak_coef(n);

    for (std::size_t t = steps; t-- > 0;) {
        // Readout membrane.
        const auto g = adjoints.d_u_out.row(t);
        for (std::size_t o = 0; o < n_out; ++o) adj_out[o] = alpha_o * adj_out[o] + g[o];
        if (t > 0) {
            const auto prev_out = trace.u_out.row(t - 1);
            for (std::size_t o = 0; o < n_out; ++o) d_alpha_out += adj_out[o] * prev_out[o];
        }

        // Sensitivity of the loss to the spikes emitted on tick t.
        if (has_spike_adjoint) {
            const auto ds = adjoints.d_spikes.row(t);
            std::copy(ds.begin(), ds.end(), d_spike.begin());
        } else {
            std::fill(d_spike.begin(), d_spike.end(), 0.0);
        }
        const auto spikes = trace.spikes_at(t);
        for (std::size_t o = 0; o < n_out; ++o) {
            if (adj_out[o] == 0.0) continue;
            k.axpy(adj_out[o], params.w_out.row(o).data(), d_spike.data(), n);
            auto dwo = d_w_out.row(o);
            for (std::size_t j = 0; j < n; ++j)
                if (spikes[j]) dwo[j] += adj_out[o];
        }
        const auto u_t = trace.u.row(t);
        if (soft) {
            k.axpy(-th, adj_u_next.data(), d_spike.data(), n);
        } else {
            for (std::size_t j = 0; j < n; ++j) d_spike[j] -= alpha_r * u_t[j] * adj_u_next[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t arrival = t + transmission_lag(delays.delay_steps[j]);
            if (arrival < steps) d_spike[j] += k.dot(w_rec_t.row(j).data(), adj_u.row(arrival).data(), n);
        }

        // Hidden membrane.
        k.surrogate(u_t.data(), th, h.data(), n);
        auto adj_u_t = adj_u.row(t);
        if (soft) {
            std::fill(leak_coef.begin(), leak_coef.end(), alpha_r);
        } else {
            for (std::size_t j = 0; j < n; ++j) leak_coef[j] = spikes[j] ? 0.0 : alpha_r;
        }
        double th_from_spike = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double via_spike = h[j] * d_spike[j];
            adj_u_t[j] = leak_coef[j] * adj_u_next[j] + via_spike;
            th_from_spike -= via_spike;
        }
        d_th += th_from_spike;
        for (double v : adj_u_t) {
            if (!std::isfinite(v)) throw NumericalDivergence("backward: non-finite membrane adjoint", t);
        }

        if (t > 0) {
            const auto u_prev = trace.u.row(t - 1);
            const auto spikes_prev = trace.spikes_at(t - 1);
            for (std::size_t j = 0; j < n; ++j) {
                if (soft) {
                    d_alpha_rec += adj_u_t[j] * u_prev[j];
                    if (spikes_prev[j]) d_th -= adj_u_t[j];
                } else if (!spikes_prev[j]) {
                    d_alpha_rec += adj_u_t[j] * u_prev[j];
                }
            }
        }
        const auto delayed = trace.delayed_at(t);
        for (std::size_t j = 0; j < n; ++j) {
            if (delayed[j]) k.axpy(1.0, adj_u_t.data(), d_w_rec_t.row(j).data(), n);
        }
        const auto x = trace.input.row(t);
        for (std::size_t c = 0; c < n_in; ++c) {
            if (x[c] != 0.0) k.axpy(x[c], adj_u_t.data(), d_w_in_t.row(c).data(), n);
        }

        std::copy(adj_u_t.begin(), adj_u_t.end(), adj_u_next.begin());
    }

    Gradients grads;
    grads.d_w_in = d_w_in_t.transposed();
    grads.d_w_rec = d_w_rec_t.transposed();
    for (std::size_t j = 0; j < n; ++j) grads.d_w_rec(j, j) = 0.0;
    grads.d_w_out = std::move(d_w_out);
    grads.d_tau_rec = d_alpha_rec * decay_factor_dtau(params.tau_rec_ms, trace.dt_ms);
    grads.d_tau_out = d_alpha_out * decay_factor_dtau(params.tau_out_ms, trace.dt_ms);
    grads.d_u_th = d_th;
    if (!grads.all_finite()) throw NumericalDivergence("backward: non-finite gradient", 0);
    return grads;
}

Gradients clip_gradient_norm(Gradients grads, double max_norm) {
    if (!(max_norm > 0.0)) throw InvalidArgument("clip_gradient_norm: max_norm must be positive");
    const double norm = grads.norm();
    if (norm > max_norm) grads *= max_norm / norm;
    return grads;
}

GradientNorms group_norms(const Gradients& grads) {
    return {std::sqrt(sum_squares(grads.d_w_in.values())), std::sqrt(sum_squares(grads.d_w_rec.values())),
            std::sqrt(sum_squares(grads.d_w_out.values())), std::abs(grads.d_tau_rec),
            std::abs(grads.d_tau_out), std::abs(grads.d_u_th)};
}

void write_gradient_norms_header(std::ostream& out) {
    out << "step,w_in,w_rec,w_out,tau_rec,tau_out,u_th\n";
}

void write_gradient_norms_row(std::ostream& out, std::size_t step, const GradientNorms& n) {
    out << step << ',' << n.w_in << ',' << n.w_rec << ',' << n.w_out << ',' << n.tau_rec << ','
        << n.tau_out << ',' << n.u_th << '\n';
}

} // namespace delaynet
