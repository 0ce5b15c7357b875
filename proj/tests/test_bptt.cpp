#include "doctest.h"

#include "delaynet/bptt.hpp"
#include "delaynet/training.hpp"
#include "support.hpp"

#include <sstream>

using namespace delaynet;

namespace {

Episode episode_of(const testing::TinyCase& c) {
    Episode ep;
    ep.input = c.input;
    ep.label = c.problem.label;
    ep.readout = {c.problem.window_begin, c.problem.window_end};
    return ep;
}

LossConfig loss_of(const testing::TinyCase& c) {
    LossConfig l;
    l.beta = c.problem.beta;
    l.bf_per_neuron = c.problem.bf_per_neuron;
    l.bf_reduction = c.problem.bf_mean ? BfReduction::mean_over_time : BfReduction::sum;
    return l;
}

void check_against_oracle(const testing::TinyCase& c) {
    const auto expected = oracle::evaluate(c.problem);
    const auto got = evaluate_sample(c.params, c.delays, episode_of(c), c.sim, loss_of(c), true);
    const auto tr = forward(c.params, c.delays, c.input, c.sim);
    REQUIRE(tr.spikes == expected.spikes);
    CHECK(got.total == doctest::Approx(expected.loss).epsilon(1e-12));
    auto cmp = [](double a, double b) { return testing::close(a, b, 1e-6, 1e-10); };
    const auto& g = got.grads;
    for (std::size_t i = 0; i < expected.d_w_in.size(); ++i) CHECK(cmp(g.d_w_in.values()[i], expected.d_w_in[i]));
    for (std::size_t i = 0; i < expected.d_w_rec.size(); ++i) CHECK(cmp(g.d_w_rec.values()[i], expected.d_w_rec[i]));
    for (std::size_t i = 0; i < expected.d_w_out.size(); ++i) CHECK(cmp(g.d_w_out.values()[i], expected.d_w_out[i]));
    CHECK(cmp(g.d_tau_rec, expected.d_tau_rec));
    CHECK(cmp(g.d_tau_out, expected.d_tau_out));
    CHECK(cmp(g.d_u_th, expected.d_u_th));
}

} // namespace

TEST_CASE("tiny 3-2-2 network matches the unrolled-graph oracle") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto c = testing::random_tiny_case(seed, 3, 10, 3);
        if (c.problem.n_in != 2 || c.problem.n_hidden != 3) continue;
        if (testing::threshold_margin(forward(c.params, c.delays, c.input, c.sim)) < 1e-9) continue;
        CAPTURE(seed);
        check_against_oracle(c);
        return;
    }
    FAIL("no 3-hidden case generated");
}

TEST_CASE("time-averaged branching term matches the oracle") {
    int checked = 0;
    for (std::uint64_t seed = 500; checked < 20; ++seed) {
        auto c = testing::random_tiny_case(seed);
        if (testing::threshold_margin(forward(c.params, c.delays, c.input, c.sim)) < 1e-9) continue;
        c.problem.beta = 0.05;
        c.problem.bf_mean = true;
        CAPTURE(seed);
        check_against_oracle(c);
        ++checked;
    }
}

TEST_CASE("property: random tiny networks match the oracle") {
    int checked = 0;
    for (std::uint64_t seed = 1000; checked < 150; ++seed) {
        auto c = testing::random_tiny_case(seed);
        c.problem.bf_per_neuron = seed % 4 == 0;
        if (testing::threshold_margin(forward(c.params, c.delays, c.input, c.sim)) < 1e-9) continue;
        CAPTURE(seed);
        check_against_oracle(c);
        ++checked;
    }
}

TEST_CASE("oracle cases actually exercise spikes, delays and both reset modes") {
    int spiking = 0, hard = 0, delayed_arrivals = 0;
    for (std::uint64_t seed = 1000; seed < 1150; ++seed) {
        const auto c = testing::random_tiny_case(seed);
        const auto tr = forward(c.params, c.delays, c.input, c.sim);
        spiking += tr.spike_count() > 0;
        hard += c.problem.hard_reset;
        for (std::size_t t = 0; t < tr.steps; ++t)
            for (std::size_t j = 0; j < tr.n_hidden; ++j) delayed_arrivals += tr.delayed_at(t)[j] && c.delays.delay_steps[j] > 1;
    }
    CHECK(spiking > 100);
    CHECK(hard > 20);
    CHECK(delayed_arrivals > 50);
}

TEST_CASE("zero output adjoints give exactly zero gradients") {
    const auto c = testing::random_tiny_case(5);
    const auto tr = forward(c.params, c.delays, c.input, c.sim);
    LossAdjoints adj{Matrix(tr.steps, tr.n_out), {}};
    const auto g = backward(tr, c.params, c.delays, adj);
    CHECK(g == Gradients::zeros_like(c.params));
}

TEST_CASE("single-step readout gradient is the outer product of adjoint and spikes") {
    NetworkParams p(1, 3, 2);
    p.w_in(0, 0) = 2.0;
    p.w_in(2, 0) = 1.5;
    p.w_out.fill(0.3);
    Matrix x(1, 1, 1.0);
    const auto tr = forward(p, DelaySchedule::uniform(3, 0.0, 1.0), x);
    LossAdjoints adj{Matrix(1, 2), {}};
    adj.d_u_out(0, 0) = 0.7;
    adj.d_u_out(0, 1) = -1.1;
    const auto g = backward(tr, p, DelaySchedule::uniform(3, 0.0, 1.0), adj);
    const double n[3] = {1, 0, 1};
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t j = 0; j < 3; ++j) CHECK(g.d_w_out(o, j) == adj.d_u_out(0, o) * n[j]);
}

TEST_CASE("leak path: input gradient at lag k scales as alpha^k") {
    // One input channel per tick; every tick but the last drives the membrane
    // negative (zero surrogate), so only the leak carries gradient back.
    const std::size_t T = 12;
    NetworkParams p(T, 1, 1);
    p.tau_rec_ms = 7.0;
    const double a = std::exp(-1.0 / 7.0);
    double pull = 0.0;
    for (std::size_t t = 0; t + 1 < T; ++t) {
        p.w_in(0, t) = -0.5;
        pull += 0.5 * std::pow(a, static_cast<double>(T - 1 - t));
    }
    p.w_in(0, T - 1) = 0.5 + pull;
    Matrix x(T, T);
    for (std::size_t t = 0; t < T; ++t) x(t, t) = 1.0;
    const auto delays = DelaySchedule::uniform(1, 0.0, 1.0);
    const auto tr = forward(p, delays, x);
    CHECK(tr.u(T - 1, 0) == doctest::Approx(0.5));
    LossAdjoints adj{Matrix(T, 1), Matrix(T, 1)};
    adj.d_spikes(T - 1, 0) = 1.0;
    const auto g = backward(tr, p, delays, adj);
    const double last = g.d_w_in(0, T - 1);
    CHECK(last == doctest::Approx(0.5));
    for (std::size_t k = 1; k < T; ++k)
        CHECK(g.d_w_in(0, T - 1 - k) == doctest::Approx(last * std::pow(a, static_cast<double>(k))).epsilon(1e-12));
}

TEST_CASE("delay path: with no leak, cross-time gradient links ticks exactly d apart") {
    for (std::size_t d : {1u, 2u, 5u, 9u}) {
        const std::size_t T = 16;
        NetworkParams p(T, 2, 1);
        p.tau_rec_ms = 0.01;  // alpha ~ 4e-44
        p.w_in.fill(0.5);
        p.w_rec(0, 1) = 0.3;  // 1 -> 0 with neuron 1's delay
        Matrix x(T, T);
        for (std::size_t t = 0; t < T; ++t) x(t, t) = 1.0;
        const auto delays = DelaySchedule::from_steps({0, d}, 1.0);
        SimConfig sim;
        sim.reset = ResetMode::hard_zero;
        const auto tr = forward(p, delays, x, sim);
        CHECK(tr.spike_count() == 0);
        LossAdjoints adj{Matrix(T, 1), Matrix(T, 2)};
        adj.d_spikes(T - 1, 0) = 1.0;
        const auto g = backward(tr, p, delays, adj);
        for (std::size_t t = 0; t < T; ++t) {
            CAPTURE(t);
            CHECK(std::abs(g.d_w_in(0, t)) == doctest::Approx(t == T - 1 ? 0.5 : 0.0));
            CHECK(std::abs(g.d_w_in(1, t)) == doctest::Approx(t == T - 1 - d ? 0.5 * 0.3 * 0.5 : 0.0));
        }
    }
}

TEST_CASE("readout gradient matches central differences") {
    int checked = 0;
    for (std::uint64_t seed = 300; checked < 10; ++seed) {
        auto c = testing::random_tiny_case(seed, 5, 20, 3);
        const auto ep = episode_of(c);
        const auto loss = loss_of(c);
        const auto base = evaluate_sample(c.params, c.delays, ep, c.sim, loss, true);
        if (base.spikes == 0) continue;
        const double h = 1e-5;
        for (std::size_t i = 0; i < c.params.w_out.size(); ++i) {
            auto plus = c.params, minus = c.params;
            plus.w_out.values()[i] += h;
            minus.w_out.values()[i] -= h;
            const double fd = (evaluate_sample(plus, c.delays, ep, c.sim, loss, false).total -
                               evaluate_sample(minus, c.delays, ep, c.sim, loss, false).total) /
                              (2 * h);
            CHECK(testing::close(base.grads.d_w_out.values()[i], fd, 1e-4, 1e-9));
        }
        ++checked;
    }
}

TEST_CASE("gradient diagonal of the recurrent matrix is zero") {
    for (std::uint64_t seed = 50; seed < 70; ++seed) {
        const auto c = testing::random_tiny_case(seed);
        const auto g = evaluate_sample(c.params, c.delays, episode_of(c), c.sim, loss_of(c), true).grads;
        for (std::size_t i = 0; i < g.d_w_rec.rows(); ++i) CHECK(g.d_w_rec(i, i) == 0.0);
    }
}

TEST_CASE("clip_gradient_norm") {
    NetworkParams p(1, 2, 1);
    auto g = Gradients::zeros_like(p);
    CHECK(clip_gradient_norm(g, 0.01) == g);
    g.d_w_in(0, 0) = 0.003;
    g.d_w_out(0, 1) = 0.004;
    CHECK(clip_gradient_norm(g, 0.01) == g);
    g.d_w_in(0, 0) = 0.6;
    g.d_w_out(0, 1) = 0.8;
    const auto c = clip_gradient_norm(g, 0.01);
    CHECK(c.norm() == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS(clip_gradient_norm(g, 0.0));
}

TEST_CASE("property: clipping is idempotent and never increases the norm") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        NetworkParams p(3, 4, 2);
        auto g = Gradients::zeros_like(p);
        const double s = std::pow(10.0, uniform(rng, -4.0, 2.0));
        for (double& v : g.d_w_in.values()) v = s * uniform(rng, -1.0, 1.0);
        for (double& v : g.d_w_rec.values()) v = s * uniform(rng, -1.0, 1.0);
        g.d_u_th = s * uniform(rng, -1.0, 1.0);
        const double m = std::pow(10.0, uniform(rng, -3.0, 1.0));
        const auto once = clip_gradient_norm(g, m);
        CHECK(once.norm() <= std::max(g.norm(), m) * (1 + 1e-12));
        CHECK(once.norm() <= m * (1 + 1e-12));
        const auto twice = clip_gradient_norm(once, m);
        for (std::size_t i = 0; i < once.d_w_in.size(); ++i)
            CHECK(twice.d_w_in.values()[i] == doctest::Approx(once.d_w_in.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("gradient dump CSV") {
    NetworkParams p(1, 2, 1);
    auto g = Gradients::zeros_like(p);
    g.d_w_in(0, 0) = 3.0;
    g.d_w_in(1, 0) = 4.0;
    g.d_tau_out = -2.0;
    std::ostringstream out;
    write_gradient_norms_header(out);
    write_gradient_norms_row(out, 7, group_norms(g));
    CHECK(out.str() == "step,w_in,w_rec,w_out,tau_rec,tau_out,u_th\n7,5,0,0,0,2,0\n");
}
