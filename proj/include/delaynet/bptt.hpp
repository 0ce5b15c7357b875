#pragma once

// Reverse pass through an unrolled forward trace.
//
// The adjoint of the hidden membrane u[t] collects
//   - the leak path:            alpha_R * adj u[t+1]
//   - the delayed recurrent path: H'(u[t]) * (W_rec^T adj u[t+L_j])_j for each
//     presynaptic neuron j with transmission lag L_j = max(d_j, 1)
//   - the reset path:           soft, -u_th * H'(u[t]) * adj u[t+1];
//                               hard, -alpha_R * u[t] * H'(u[t]) * adj u[t+1]
//   - the readout path:         H'(u[t]) * W_out^T adj u_out[t]
// where H' is the piecewise-linear surrogate standing in for the derivative of
// the spike nonlinearity wherever a spike is consumed.

#include "delaynet/matrix.hpp"
#include "delaynet/network.hpp"
#include "delaynet/topology.hpp"

#include <iosfwd>
#include <vector>

namespace delaynet {

struct Gradients {
    Matrix d_w_in;
    Matrix d_w_rec;
    Matrix d_w_out;
    double d_tau_rec = 0.0;
    double d_tau_out = 0.0;
    double d_u_th = 0.0;

    static Gradients zeros_like(const NetworkParams& params);

    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);

    double squared_norm() const;
    double norm() const;
    bool all_finite() const;

    bool operator==(const Gradients&) const = default;
};

// Loss sensitivities fed into the reverse pass. d_spikes may be left empty when
// the loss does not read the hidden spikes directly.
struct LossAdjoints {
    Matrix d_u_out;   // steps x n_out
    Matrix d_spikes;  // steps x n_hidden, or empty
};

Gradients backward(const ForwardTrace& trace, const NetworkParams& params,
                   const DelaySchedule& delays, const LossAdjoints& adjoints);

// Rescales so the global L2 norm is at most max_norm. Zero gradients pass through.
Gradients clip_gradient_norm(Gradients grads, double max_norm);

// Per-group L2 norms, for the gradient dump.
struct GradientNorms {
    double w_in = 0, w_rec = 0, w_out = 0, tau_rec = 0, tau_out = 0, u_th = 0;
};

GradientNorms group_norms(const Gradients& grads);

// step,w_in,w_rec,w_out,tau_rec,tau_out,u_th
void write_gradient_norms_header(std::ostream& out);
void write_gradient_norms_row(std::ostream& out, std::size_t step, const GradientNorms& norms);

} // namespace delaynet
