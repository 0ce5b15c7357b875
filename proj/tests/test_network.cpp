#include "doctest.h"

#include "delaynet/errors.hpp"
#include "delaynet/network.hpp"
#include "support.hpp"

#include <cmath>
#include <sstream>

using namespace delaynet;

namespace {

// Dense one-tick recurrent network with no delay machinery, summing in the same
// order as the simulator so results can be compared bit for bit.
ForwardTrace reference_one_tick(const NetworkParams& p, const SpikeTrain& x, double dt) {
    const std::size_t n = p.n_hidden(), n_out = p.n_out();
    ForwardTrace tr;
    tr.steps = x.steps;
    tr.n_hidden = n;
    tr.n_out = n_out;
    tr.u = Matrix(x.steps, n);
    tr.spikes.assign(x.steps * n, 0);
    tr.u_out = Matrix(x.steps, n_out);
    const double a = std::exp(-dt / p.tau_rec_ms), ao = std::exp(-dt / p.tau_out_ms);
    std::vector<double> u_prev(n, 0.0), o_prev(n_out, 0.0);
    std::vector<std::uint8_t> n_prev(n, 0);
    for (std::size_t t = 0; t < x.steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            double cur = 0.0;
            for (std::size_t c = 0; c < x.channels; ++c)
                if (x.at(t, c)) cur += p.w_in(i, c);
            for (std::size_t j = 0; j < n; ++j)
                if (n_prev[j]) cur += p.w_rec(i, j);
            const double u = (a * u_prev[i] + cur) - p.u_th * n_prev[i];
            tr.u(t, i) = u;
            tr.spikes[t * n + i] = u >= p.u_th;
        }
        for (std::size_t o = 0; o < n_out; ++o) {
            double drive = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (tr.spikes[t * n + j]) drive += p.w_out(o, j);
            tr.u_out(t, o) = ao * o_prev[o] + drive;
        }
        for (std::size_t i = 0; i < n; ++i) {
            u_prev[i] = tr.u(t, i);
            n_prev[i] = tr.spikes[t * n + i];
        }
        for (std::size_t o = 0; o < n_out; ++o) o_prev[o] = tr.u_out(t, o);
    }
    return tr;
}

NetworkParams random_params(Rng& rng, std::size_t n_in, std::size_t n, std::size_t n_out) {
    NetworkParams p(n_in, n, n_out);
    p.w_in = testing::random_matrix(rng, n, n_in, -0.5, 1.0);
    p.w_rec = testing::random_matrix(rng, n, n, -0.6, 0.6);
    for (std::size_t i = 0; i < n; ++i) p.w_rec(i, i) = 0.0;
    p.w_out = testing::random_matrix(rng, n_out, n, -1.0, 1.0);
    p.tau_rec_ms = uniform(rng, 2.0, 40.0);
    p.tau_out_ms = uniform(rng, 2.0, 40.0);
    p.u_th = uniform(rng, 0.5, 1.5);
    return p;
}

} // namespace

TEST_CASE("spike buffer") {
    SpikeBuffer b(2, 3);
    CHECK(b.capacity() == 4);
    CHECK(b.read(0, 0) == 0);
    const std::uint8_t s0[] = {1, 0}, s1[] = {0, 1}, s2[] = {0, 0};
    b.push(s0);
    CHECK(b.read(0, 0) == 1);
    CHECK(b.read(0, 1) == 0);
    b.push(s1);
    CHECK(b.read(1, 0) == 1);
    CHECK(b.read(0, 1) == 1);
    b.push(s2);
    b.push(s2);
    CHECK(b.read(0, 3) == 1);
    b.push(s2);
    CHECK(b.read(0, 3) == 0);
    CHECK(b.read(1, 3) == 1);
    CHECK(b.read(0, 9) == 0);
}

TEST_CASE("golden two-neuron trace") {
    NetworkParams p(1, 2, 1);
    p.w_in(0, 0) = 0.6;
    p.w_rec(0, 1) = 0.7;
    p.w_rec(1, 0) = 1.2;
    p.w_out(0, 0) = 1.0;
    p.w_out(0, 1) = -1.0;
    p.tau_rec_ms = p.tau_out_ms = 1.0 / std::log(2.0);  // alpha = 1/2
    const auto delays = DelaySchedule::from_steps({2, 1}, 1.0);
    SpikeTrain x(10, 1, 1.0);
    for (int t : {0, 1, 2, 5}) x.at(t, 0) = 1;
    const auto tr = forward(p, delays, x);

    struct Row {
        int t;
        double u[2];
        int n[2];
        int nd[2];
        double out;
    };
    const Row golden[] = {
        {0, {0.6, 0.0}, {0, 0}, {0, 0}, 0.0},
        {1, {0.9, 0.0}, {0, 0}, {0, 0}, 0.0},
        {2, {1.05, 0.0}, {1, 0}, {0, 0}, 1.0},
        {3, {-0.475, 0.0}, {0, 0}, {0, 0}, 0.5},
        {4, {-0.2375, 1.2}, {0, 1}, {1, 0}, -0.75},
        {5, {1.18125, -0.4}, {1, 0}, {0, 1}, 0.625},
        {6, {-0.409375, -0.2}, {0, 0}, {0, 0}, 0.3125},
        {7, {-0.2046875, 1.1}, {0, 1}, {1, 0}, -0.84375},
        {8, {0.59765625, -0.45}, {0, 0}, {0, 1}, -0.421875},
        {9, {0.298828125, -0.225}, {0, 0}, {0, 0}, -0.2109375},
    };
    for (const auto& r : golden) {
        CAPTURE(r.t);
        for (int i = 0; i < 2; ++i) {
            CHECK(tr.u(r.t, i) == doctest::Approx(r.u[i]).epsilon(1e-12));
            CHECK(tr.spikes_at(r.t)[i] == r.n[i]);
            CHECK(tr.delayed_at(r.t)[i] == r.nd[i]);
        }
        CHECK(tr.u_out(r.t, 0) == doctest::Approx(r.out).epsilon(1e-12));
    }
}

TEST_CASE("zero weights give a silent network") {
    NetworkParams p(4, 3, 2);
    Rng rng(31);
    const auto x = testing::random_spikes(rng, 50, 4, 0.5);
    const auto tr = forward(p, DelaySchedule::uniform(3, 5.0, 1.0), x);
    for (double v : tr.u.values()) CHECK(v == 0.0);
    for (double v : tr.u_out.values()) CHECK(v == 0.0);
    CHECK(tr.spike_count() == 0);
}

TEST_CASE("a delayed spike first reaches the postsynaptic current d ticks later") {
    NetworkParams p(1, 2, 1);
    p.w_in(0, 0) = 100.0;
    p.w_rec(1, 0) = 0.25;
    SpikeTrain x(20, 1, 1.0);
    x.at(5, 0) = 1;
    const auto tr = forward(p, DelaySchedule::from_steps({3, 0}, 1.0), x);
    CHECK(tr.spikes_at(5)[0] == 1);
    // Neuron 1 only integrates neuron 0, so its membrane is its input current
    // until the first arrival.
    for (std::size_t t = 0; t < 8; ++t) CHECK(tr.u(t, 1) == 0.0);
    CHECK(tr.u(8, 1) == 0.25);
}

TEST_CASE("property: zero delays reproduce the buffer-free one-tick network bit for bit") {
    Rng rng(32);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n_in = uniform_int(rng, 1, 6), n = uniform_int(rng, 1, 12), n_out = uniform_int(rng, 1, 3);
        const auto p = random_params(rng, n_in, n, n_out);
        const auto x = testing::random_spikes(rng, uniform_int(rng, 1, 80), n_in, 0.3);
        const auto tr = forward(p, DelaySchedule::uniform(n, 0.0, 1.0), x);
        const auto ref = reference_one_tick(p, x, 1.0);
        CHECK(tr.u == ref.u);
        CHECK(tr.spikes == ref.spikes);
        CHECK(tr.u_out == ref.u_out);
        // d = 1 is the same network.
        CHECK(forward(p, DelaySchedule::uniform(n, 1.0, 1.0), x).spikes == tr.spikes);
    }
}

TEST_CASE("property: forward is deterministic and bounded") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_params(rng, 3, 8, 2);
        std::vector<std::size_t> d(8);
        for (auto& v : d) v = uniform_int(rng, 0, 10);
        const auto delays = DelaySchedule::from_steps(d, 1.0);
        const auto x = testing::random_spikes(rng, 60, 3, 0.3);
        const auto a = forward(p, delays, x), b = forward(p, delays, x);
        CHECK(a.u == b.u);
        CHECK(a.spikes == b.spikes);
        CHECK(a.u_out == b.u_out);
        CHECK(a.spike_count() <= a.steps * a.n_hidden);
    }
}

TEST_CASE("property: without recurrent weights the delays are irrelevant") {
    Rng rng(34);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = random_params(rng, 3, 6, 2);
        p.w_rec.fill(0.0);
        const auto x = testing::random_spikes(rng, 60, 3, 0.4);
        std::vector<std::size_t> d(6);
        for (auto& v : d) v = uniform_int(rng, 0, 20);
        const auto a = forward(p, DelaySchedule::from_steps(d, 1.0), x);
        const auto b = forward(p, DelaySchedule::uniform(6, 0.0, 1.0), x);
        CHECK(a.u == b.u);
        CHECK(a.u_out == b.u_out);
    }
}

TEST_CASE("analog input drives the same equations") {
    NetworkParams p(1, 1, 1);
    p.w_in(0, 0) = 2.0;
    p.w_out(0, 0) = 1.0;
    Matrix x(3, 1);
    x(0, 0) = 0.25;
    x(1, 0) = 0.5;
    const auto tr = forward(p, DelaySchedule::uniform(1, 0.0, 1.0), x);
    const double a = std::exp(-1.0 / 20.0);
    CHECK(tr.u(0, 0) == 0.5);
    CHECK(tr.u(1, 0) == doctest::Approx(a * 0.5 + 1.0));
    CHECK(tr.spikes_at(1)[0] == 1);
    CHECK(tr.u(2, 0) == doctest::Approx(a * (a * 0.5 + 1.0) - 1.0));
}

TEST_CASE("forward errors") {
    NetworkParams p(2, 3, 1);
    SpikeTrain wrong(5, 3, 1.0);
    CHECK_THROWS_AS(forward(p, DelaySchedule::uniform(3, 0.0, 1.0), wrong), InvalidArgument);
    SpikeTrain ok(5, 2, 1.0);
    CHECK_THROWS_AS(forward(p, DelaySchedule::uniform(2, 0.0, 1.0), ok), InvalidArgument);
    Matrix nan_input(4, 2);
    nan_input(2, 1) = std::nan("");
    p.w_in(0, 1) = 1.0;
    try {
        forward(p, DelaySchedule::uniform(3, 0.0, 1.0), nan_input);
        FAIL("expected divergence");
    } catch (const NumericalDivergence& e) {
        CHECK(e.timestep() == 2);
    }
}

TEST_CASE("readout decision") {
    ForwardTrace tr;
    tr.steps = 4;
    tr.n_out = 2;
    tr.u_out = Matrix(4, 2);
    for (std::size_t t = 0; t < 4; ++t) {
        tr.u_out(t, 0) = 2.0;
        tr.u_out(t, 1) = 1.0;
    }
    CHECK(readout_decision(tr, {1, 3}) == 0);
    tr.u_out.fill(0.0);
    CHECK(readout_decision(tr, {0, 4}) == 0);
    tr.u_out(3, 1) = 4.0;
    CHECK(window_mean_output(tr, {2, 4})[1] == 2.0);
    CHECK(readout_decision(tr, {2, 4}) == 1);
    CHECK_THROWS_AS(readout_decision(tr, {2, 2}), InvalidArgument);
    CHECK_THROWS_AS(readout_decision(tr, {2, 5}), InvalidArgument);
}

TEST_CASE("raster CSV lists spike events") {
    SpikeTrain s(3, 2, 1.0);
    s.at(0, 1) = 1;
    s.at(2, 0) = 1;
    std::ostringstream out;
    write_raster_csv(out, s);
    CHECK(out.str() == "t,neuron,spike\n0,1,1\n2,0,1\n");
}

TEST_CASE("run file round trip") {
    Rng rng(35);
    const auto p = random_params(rng, 2, 5, 2);
    const auto tr = forward(p, DelaySchedule::uniform(5, 2.0, 1.0), testing::random_spikes(rng, 30, 2, 0.4));
    std::stringstream io;
    write_run_file(io, tr);
    const auto rf = read_run_file(io);
    CHECK(rf.steps == tr.steps);
    CHECK(rf.n_hidden == 5);
    CHECK(rf.u == tr.u);
    CHECK(rf.spikes == tr.spikes);
    CHECK(rf.u_out == tr.u_out);
    std::istringstream junk("XXXXjunk");
    CHECK_THROWS_AS(read_run_file(junk), InvalidArgument);
}
