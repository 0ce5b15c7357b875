#pragma once

// Hand-rolled generators for property tests.

#include "delaynet/network.hpp"
#include "delaynet/rng.hpp"
#include "delaynet/topology.hpp"

#include "oracle/tape.hpp"

#include <cmath>
#include <vector>

namespace testing {

using delaynet::Rng;

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = delaynet::uniform(rng, lo, hi);
    return v;
}

inline delaynet::Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    delaynet::Matrix m(rows, cols);
    for (double& x : m.values()) x = delaynet::uniform(rng, lo, hi);
    return m;
}

inline delaynet::SpikeTrain random_spikes(Rng& rng, std::size_t steps, std::size_t channels, double p) {
    delaynet::SpikeTrain s(steps, channels, 1.0);
    for (auto& b : s.bits) b = delaynet::bernoulli(rng, p) ? 1 : 0;
    return s;
}

// A tiny random network problem, expressed both for the oracle and the library.
struct TinyCase {
    oracle::Problem problem;
    delaynet::NetworkParams params;
    delaynet::DelaySchedule delays;
    delaynet::Matrix input;
    delaynet::SimConfig sim;
};

inline TinyCase random_tiny_case(std::uint64_t seed, std::size_t max_hidden = 5, std::size_t max_steps = 20,
                                 std::size_t max_delay = 3) {
    Rng rng(seed);
    TinyCase c;
    auto& p = c.problem;
    p.n_in = delaynet::uniform_int(rng, 1, 3);
    p.n_hidden = delaynet::uniform_int(rng, 1, max_hidden);
    p.n_out = delaynet::uniform_int(rng, 2, 3);
    p.steps = delaynet::uniform_int(rng, 2, max_steps);
    p.w_in = random_vector(rng, p.n_hidden * p.n_in, -1.0, 1.5);
    p.w_rec = random_vector(rng, p.n_hidden * p.n_hidden, -0.8, 0.8);
    for (std::size_t i = 0; i < p.n_hidden; ++i) p.w_rec[i * p.n_hidden + i] = 0.0;
    p.w_out = random_vector(rng, p.n_out * p.n_hidden, -1.0, 1.0);
    p.tau_rec = delaynet::uniform(rng, 2.0, 30.0);
    p.tau_out = delaynet::uniform(rng, 2.0, 30.0);
    p.u_th = delaynet::uniform(rng, 0.5, 1.5);
    p.hard_reset = delaynet::bernoulli(rng, 0.3);
    for (std::size_t i = 0; i < p.n_hidden; ++i) p.delays.push_back(delaynet::uniform_int(rng, 0, max_delay));
    p.input = random_vector(rng, p.steps * p.n_in, 0.0, 1.0);
    p.label = delaynet::uniform_int(rng, 0, p.n_out - 1);
    p.window_begin = delaynet::uniform_int(rng, 0, p.steps - 1);
    p.window_end = delaynet::uniform_int(rng, p.window_begin + 1, p.steps);
    p.beta = delaynet::bernoulli(rng, 0.5) ? delaynet::uniform(rng, 0.0, 0.05) : 0.0;

    c.params = delaynet::NetworkParams(p.n_in, p.n_hidden, p.n_out);
    std::copy(p.w_in.begin(), p.w_in.end(), c.params.w_in.values().begin());
    std::copy(p.w_rec.begin(), p.w_rec.end(), c.params.w_rec.values().begin());
    std::copy(p.w_out.begin(), p.w_out.end(), c.params.w_out.values().begin());
    c.params.tau_rec_ms = p.tau_rec;
    c.params.tau_out_ms = p.tau_out;
    c.params.u_th = p.u_th;
    c.delays = delaynet::DelaySchedule::from_steps(p.delays, p.dt);
    c.input = delaynet::Matrix(p.steps, p.n_in);
    std::copy(p.input.begin(), p.input.end(), c.input.values().begin());
    c.sim.dt_ms = p.dt;
    c.sim.reset = p.hard_reset ? delaynet::ResetMode::hard_zero : delaynet::ResetMode::soft_subtract;
    return c;
}

// |a - b| <= abs_tol + rel_tol * max(|a|, |b|)
inline bool close(double a, double b, double rel_tol, double abs_tol) {
    return std::abs(a - b) <= abs_tol + rel_tol * std::max(std::abs(a), std::abs(b));
}

// Smallest distance from any membrane value to the threshold; cases closer than
// this are skipped because summation order can flip the spike.
inline double threshold_margin(const delaynet::ForwardTrace& tr) {
    double m = INFINITY;
    for (double u : tr.u.values()) m = std::min(m, std::abs(u - tr.u_th));
    return m;
}

} // namespace testing
