#include "doctest.h"

#include "delaynet/errors.hpp"
#include "delaynet/training.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace delaynet;

namespace {

// Two-class toy: class k drives input channel k for the first ticks.
class ToySource : public EpisodeSource {
public:
    explicit ToySource(bool poison = false) : poison_(poison) {}

    Episode train_episode(std::size_t epoch, std::size_t index) const override {
        return make(derive_seed(derive_seed(9, "toy/train", epoch), "sample", index));
    }
    Episode eval_episode(std::size_t index) const override { return make(derive_seed(9, "toy/eval", index)); }

private:
    Episode make(std::uint64_t seed) const {
        Rng rng(seed);
        Episode ep;
        ep.label = uniform_int(rng, 0, 1);
        if (poison_) {
            Matrix x(20, 2, std::nan(""));
            ep.input = x;
        } else {
            SpikeTrain s(20, 2, 1.0);
            for (std::size_t t = 0; t < 10; ++t) s.at(t, ep.label) = bernoulli(rng, 0.6);
            ep.input = s;
        }
        ep.readout = {15, 20};
        return ep;
    }
    bool poison_;
};

NetworkParams toy_params() {
    NetworkShape shape;
    shape.n_in = 2;
    shape.n_hidden = 6;
    shape.n_out = 2;
    return initialize_network(shape, 123);
}

TrainConfig toy_config() {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.samples_per_epoch = 24;
    cfg.batch_size = 8;
    cfg.eval_samples = 16;
    cfg.madgrad.lr = 0.05;
    cfg.loss.clip_max_norm = 1.0;
    return cfg;
}

SpikeTrain train_from_counts(const std::vector<int>& counts, std::size_t channels) {
    SpikeTrain s(counts.size(), channels, 1.0);
    for (std::size_t t = 0; t < counts.size(); ++t)
        for (int i = 0; i < counts[t]; ++i) s.at(t, static_cast<std::size_t>(i)) = 1;
    return s;
}

} // namespace

TEST_CASE("branching factor loss examples") {
    CHECK(branching_factor_loss(train_from_counts({3, 3, 3, 3}, 5)) == 9.0);
    SpikeTrain single(6, 4, 1.0);
    single.at(3, 2) = 1;
    CHECK(branching_factor_loss(single) == 2.0);
    CHECK(branching_factor_loss(SpikeTrain(10, 4, 1.0)) == 0.0);
    SpikeTrain bad(2, 2, 1.0);
    bad.at(0, 0) = 2;
    CHECK_THROWS_AS(branching_factor_loss(bad), InvalidArgument);
    // Sum-then-square differs from the per-neuron reading when neurons swap.
    SpikeTrain swap(2, 2, 1.0);
    swap.at(0, 0) = 1;
    swap.at(1, 1) = 1;
    CHECK(branching_factor_loss(swap) == 1.0);
    CHECK(branching_factor_loss_per_neuron(swap) == 3.0);
}

TEST_CASE("branching factor gradient by hand") {
    // N = [2, 0, 1]: dL/dN[t] = 2(N[t] - N[t-1]) - 2(N[t+1] - N[t])
    const auto s = train_from_counts({2, 0, 1}, 3);
    const auto g = branching_factor_grad(s, 1.0);
    const double expect[3] = {2 * 2 - 2 * (0 - 2), 2 * (0 - 2) - 2 * (1 - 0), 2 * (1 - 0)};
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 3; ++i) CHECK(g(t, i) == expect[t]);
    CHECK(branching_factor_grad(s, 0.5)(0, 0) == 4.0);
}

TEST_CASE("property: branching factor loss is invariant to neuron permutations") {
    Rng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t T = uniform_int(rng, 1, 40), n = uniform_int(rng, 1, 12);
        const auto s = testing::random_spikes(rng, T, n, uniform01(rng));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_int(rng, 0, i - 1)]);
        SpikeTrain q(T, n, 1.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < n; ++i) q.at(t, perm[i]) = s.at(t, i);
        CHECK(branching_factor_loss(q) == branching_factor_loss(s));
        CHECK(branching_factor_loss_per_neuron(q) == branching_factor_loss_per_neuron(s));
    }
}

TEST_CASE("total loss") {
    LossConfig cfg;
    CHECK(total_loss(1.0, 0.0, cfg) == 1.0);
    CHECK(total_loss(0.0, 500.0, cfg) == 0.5);
    CHECK(total_loss(2.3, 100.0, cfg) == doctest::Approx(2.4).epsilon(1e-15));
    Rng rng(52);
    for (int i = 0; i < 200; ++i) {
        const double x = uniform(rng, -1e6, 1e6);
        CHECK(total_loss(x, 0.0, cfg) == x);
    }
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("cross entropy") {
    const double uniform2[] = {0.0, 0.0};
    CHECK(cross_entropy(uniform2, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const double sharp[] = {10.0, -10.0};
    CHECK(cross_entropy(sharp, 0) == doctest::Approx(2.0611536e-9).epsilon(1e-6));
    CHECK(cross_entropy(sharp, 1) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS_AS(cross_entropy(sharp, 2), InvalidArgument);
    const double big[] = {1000.0, 999.0};
    CHECK(std::isfinite(cross_entropy(big, 1)));
    const auto g = cross_entropy_grad(uniform2, 1);
    CHECK(g[0] == 0.5);
    CHECK(g[1] == -0.5);
}

TEST_CASE("recurrent initialisation") {
    const std::size_t n = 100;
    const auto w = kaiming_uniform_recurrent_init(n, 7);
    const double bound = std::sqrt(6.0) / static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(w(i, i) == 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(std::abs(w(i, j)) < bound);
            sum += w(i, j);
        }
    }
    // Off-diagonal entries: n(n-1) draws with variance bound^2 / 3.
    const double count = static_cast<double>(n * (n - 1));
    const double se = bound / std::sqrt(3.0) / std::sqrt(count);
    CHECK(std::abs(sum / count) < 3.0 * se);
    CHECK(w == kaiming_uniform_recurrent_init(n, 7));
    CHECK_THROWS_AS(kaiming_uniform_recurrent_init(0, 1), InvalidArgument);
}

TEST_CASE("network initialisation") {
    NetworkShape shape;
    const auto p = initialize_network(shape, 5);
    CHECK(p.n_in() == 40);
    CHECK(p.n_hidden() == 125);
    CHECK(p.n_out() == 2);
    CHECK(p.u_th == 1.0);
    const double b_in = init_bound(InitBound::sqrt_6_over_n, 40);
    CHECK(b_in == std::sqrt(6.0 / 40.0));
    for (double v : p.w_in.values()) CHECK(std::abs(v) < b_in);
    CHECK(p == initialize_network(shape, 5));
    CHECK(!(p == initialize_network(shape, 6)));
    shape.recurrent = false;
    for (double v : initialize_network(shape, 5).w_rec.values()) CHECK(v == 0.0);
}

TEST_CASE("flat parameter view round trip") {
    auto p = toy_params();
    auto flat = flatten(p);
    CHECK(flat.size() == parameter_count(p));
    CHECK(flat.back() == p.u_th);
    flat.back() = 0.25;
    assign_flat(p, flat);
    CHECK(p.u_th == 0.25);
    CHECK(flatten(p) == flat);
    flat.pop_back();
    CHECK_THROWS_AS(assign_flat(p, flat), InvalidArgument);
}

TEST_CASE("madgrad with zero gradients is the identity") {
    auto p = toy_params();
    const auto before = p;
    auto st = OptimizerState::init(p, MadgradConfig{});
    for (int k = 0; k < 10; ++k) madgrad_step(st, p, Gradients::zeros_like(p));
    CHECK(p == before);
    CHECK(st.k == 10);
}

TEST_CASE("madgrad golden traces") {
    NetworkParams p(0, 0, 0);
    SUBCASE("no momentum averaging, g = 1, lr = 0.1") {
        p.u_th = 0.0;
        auto st = OptimizerState::init(p, MadgradConfig{0.1, 0.0, 1e-6});
        auto g = Gradients::zeros_like(p);
        g.d_u_th = 1.0;
        madgrad_step(st, p, g);
        CHECK(p.u_th == doctest::Approx(-0.21544300484530501).epsilon(1e-14));
        madgrad_step(st, p, g);
        CHECK(p.u_th == doctest::Approx(-0.38771841270000107).epsilon(1e-14));
    }
    SUBCASE("momentum 0.9, varying gradients") {
        p.u_th = 1.0;
        auto st = OptimizerState::init(p, MadgradConfig{0.01, 0.9, 1e-6});
        auto g = Gradients::zeros_like(p);
        const double grads[] = {0.5, -1.0, 2.0};
        const double expect[] = {0.9963159956453358, 1.0002651648174792, 0.9944601496586959};
        for (int k = 0; k < 3; ++k) {
            g.d_u_th = grads[k];
            madgrad_step(st, p, g);
            CHECK(p.u_th == doctest::Approx(expect[k]).epsilon(1e-14));
        }
    }
}

TEST_CASE("property: madgrad squared-gradient accumulator never decreases") {
    Rng rng(53);
    auto p = toy_params();
    auto st = OptimizerState::init(p, MadgradConfig{});
    for (int k = 0; k < 30; ++k) {
        auto g = Gradients::zeros_like(p);
        for (double& v : g.d_w_in.values()) v = uniform(rng, -1.0, 1.0) * (bernoulli(rng, 0.5) ? 1.0 : 0.0);
        g.d_tau_rec = uniform(rng, -1.0, 1.0);
        const auto nu_before = st.nu;
        madgrad_step(st, p, g);
        for (std::size_t i = 0; i < st.nu.size(); ++i) CHECK(st.nu[i] >= nu_before[i]);
    }
}

TEST_CASE("sgd step") {
    NetworkParams p(0, 0, 0);
    p.u_th = 1.0;
    auto g = Gradients::zeros_like(p);
    g.d_u_th = 2.0;
    sgd_step(p, g, 0.25);
    CHECK(p.u_th == 0.5);
}

TEST_CASE("constraints") {
    NetworkParams p(1, 3, 1);
    Constraints c;
    p.w_rec.fill(0.4);
    p.tau_rec_ms = 2000.0;
    p.tau_out_ms = 0.05;
    p.u_th = -3.0;
    CHECK_THROWS_AS(check_constraints(p, c), std::logic_error);
    apply_constraints(p, c);
    CHECK(p.tau_rec_ms == 50.0);
    CHECK(p.tau_out_ms == 0.1);
    CHECK(p.u_th == -3.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(p.w_rec(i, i) == 0.0);
    CHECK(p.w_rec(0, 1) == 0.4);
    CHECK_NOTHROW(check_constraints(p, c));
    p.tau_rec_ms = 20.61;
    apply_constraints(p, c);
    CHECK(p.tau_rec_ms == 20.61);
    c.no_recurrence = true;
    apply_constraints(p, c);
    for (double v : p.w_rec.values()) CHECK(v == 0.0);
    c.tau_rec = {-1.0, 50.0};
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("zero epochs leave the initialisation untouched") {
    auto cfg = toy_config();
    cfg.epochs = 0;
    const auto init = toy_params();
    const auto r = train(cfg, init, DelaySchedule::uniform(6, 2.0, 1.0), ToySource{});
    CHECK(r.params == init);
    CHECK(r.history.empty());
}

TEST_CASE("training is reproducible and independent of the worker count") {
    const auto init = toy_params();
    const auto delays = DelaySchedule::uniform(6, 2.0, 1.0);
    auto cfg = toy_config();
    cfg.assert_constraints = true;
    std::size_t batches = 0;
    TrainHooks hooks;
    hooks.after_batch = [&](std::size_t, const NetworkParams& p) {
        ++batches;
        for (std::size_t i = 0; i < p.n_hidden(); ++i) CHECK(p.w_rec(i, i) == 0.0);
        CHECK(p.tau_rec_ms >= 0.1);
        CHECK(p.tau_rec_ms <= 50.0);
    };
    const auto a = train(cfg, init, delays, ToySource{}, hooks);
    CHECK(batches == 9);
    cfg.threads = 3;
    const auto b = train(cfg, init, delays, ToySource{});
    CHECK(a.params == b.params);
    CHECK(a.optimizer == b.optimizer);
    std::ostringstream ca, cb;
    for (const auto& m : a.history) write_metrics_row(ca, m);
    for (const auto& m : b.history) write_metrics_row(cb, m);
    CHECK(ca.str() == cb.str());
    CHECK(!(a.params == init));
}

TEST_CASE("divergence aborts with the last finite state") {
    const auto init = toy_params();
    try {
        train(toy_config(), init, DelaySchedule::uniform(6, 2.0, 1.0), ToySource{true});
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.last_good() == init);
        CHECK(e.optimizer().k == 0);
    }
}

TEST_CASE("train config validation") {
    auto cfg = toy_config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = toy_config();
    cfg.madgrad.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("metrics CSV header") {
    std::ostringstream out;
    write_metrics_header(out);
    CHECK(out.str() == "epoch,train_loss,train_acc,test_acc,mean_spike_rate,bf_loss\n");
}

TEST_CASE("checkpoint round trip") {
    auto p = toy_params();
    Checkpoint ck;
    ck.params = p;
    ck.delays = DelaySchedule::from_steps({0, 1, 2, 3, 80, 100}, 1.0);
    ck.sim.reset = ResetMode::hard_zero;
    auto st = OptimizerState::init(p, MadgradConfig{});
    auto g = Gradients::zeros_like(p);
    g.d_w_in.fill(0.1);
    madgrad_step(st, ck.params, g);
    ck.optimizer = st;
    std::stringstream io;
    write_checkpoint(io, ck);
    const auto back = read_checkpoint(io);
    CHECK(back.params == ck.params);
    CHECK(back.delays == ck.delays);
    CHECK(back.sim.reset == ResetMode::hard_zero);
    REQUIRE(back.optimizer);
    CHECK(*back.optimizer == st);

    ck.optimizer.reset();
    std::stringstream io2;
    write_checkpoint(io2, ck);
    CHECK(!read_checkpoint(io2).optimizer);

    std::string bytes = io.str();
    bytes.resize(bytes.size() / 2);
    std::istringstream truncated(bytes);
    CHECK_THROWS_AS(read_checkpoint(truncated), InvalidArgument);
    bytes = io.str();
    bytes[4] = 9;
    std::istringstream wrong_version(bytes);
    CHECK_THROWS_AS(read_checkpoint(wrong_version), InvalidArgument);
}
