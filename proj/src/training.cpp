#include "delaynet/training.hpp"

#include "delaynet/binary_io.hpp"
#include "delaynet/errors.hpp"
#include "delaynet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <thread>

namespace delaynet {

// ---- losses ----

void LossConfig::validate() const {
    if (!(beta >= 0.0)) throw InvalidArgument("loss: beta must be non-negative");
    if (!(clip_max_norm > 0.0)) throw InvalidArgument("loss: clip_max_norm must be positive");
}

namespace {

void require_binary(const SpikeTrain& spikes) {
    for (auto b : spikes.bits)
        if (b > 1) throw InvalidArgument("branching factor loss: spike train must be binary");
}

std::vector<double> population_counts(const SpikeTrain& spikes) {
    std::vector<double> counts(spikes.steps, 0.0);
    for (std::size_t t = 0; t < spikes.steps; ++t) {
        std::size_t c = 0;
        for (auto b : spikes.row(t)) c += b;
        counts[t] = static_cast<double>(c);
    }
    return counts;
}

} // namespace

double branching_factor_loss(const SpikeTrain& spikes) {
    require_binary(spikes);
    const auto counts = population_counts(spikes);
    double loss = 0.0;
    double prev = 0.0;
    for (double c : counts) {
        loss += (c - prev) * (c - prev);
        prev = c;
    }
    return loss;
}

double branching_factor_loss_per_neuron(const SpikeTrain& spikes) {
    require_binary(spikes);
    double loss = 0.0;
    for (std::size_t t = 0; t < spikes.steps; ++t) {
        for (std::size_t i = 0; i < spikes.channels; ++i) {
            const int prev = t > 0 ? spikes.at(t - 1, i) : 0;
            const int diff = spikes.at(t, i) - prev;
            loss += diff * diff;
        }
    }
    return loss;
}

Matrix branching_factor_grad(const SpikeTrain& spikes, double scale, bool per_neuron) {
    Matrix grad(spikes.steps, spikes.channels);
    const std::size_t steps = spikes.steps;
    if (per_neuron) {
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t i = 0; i < spikes.channels; ++i) {
                const double cur = spikes.at(t, i);
                const double prev = t > 0 ? spikes.at(t - 1, i) : 0.0;
                double g = 2.0 * (cur - prev);
                if (t + 1 < steps) g -= 2.0 * (spikes.at(t + 1, i) - cur);
                grad(t, i) = scale * g;
            }
        }
        return grad;
    }
    const auto counts = population_counts(spikes);
    for (std::size_t t = 0; t < steps; ++t) {
        const double prev = t > 0 ? counts[t - 1] : 0.0;
        double g = 2.0 * (counts[t] - prev);
        if (t + 1 < steps) g -= 2.0 * (counts[t + 1] - counts[t]);
        auto row = grad.row(t);
        std::fill(row.begin(), row.end(), scale * g);
    }
    return grad;
}

double total_loss(double net_loss, double bf_loss, const LossConfig& cfg) {
    return net_loss + cfg.beta * bf_loss;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw InvalidArgument("cross_entropy: label out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return -(logits[label] - m - std::log(z));
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) throw InvalidArgument("cross_entropy: label out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= z;
    p[label] -= 1.0;
    return p;
}

// ---- initialisation ----

double init_bound(InitBound kind, std::size_t fan_in) {
    if (fan_in == 0) throw InvalidArgument("init: fan_in must be positive");
    const auto n = static_cast<double>(fan_in);
    return kind == InitBound::sqrt6_over_n ? std::sqrt(6.0) / n : std::sqrt(6.0 / n);
}

Matrix uniform_fan_in_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::uint64_t seed,
                           InitBound kind) {
    const double bound = init_bound(kind, fan_in);
    Matrix m(rows, cols);
    Rng rng(seed);
    for (double& v : m.values()) {
        // open interval: redraw the (measure-zero) lower endpoint
        do {
            v = uniform(rng, -bound, bound);
        } while (v == -bound);
    }
    return m;
}

Matrix kaiming_uniform_recurrent_init(std::size_t n, std::uint64_t seed, InitBound kind) {
    if (n == 0) throw InvalidArgument("recurrent init: n must be positive");
    Matrix w = uniform_fan_in_init(n, n, n, seed, kind);
    for (std::size_t i = 0; i < n; ++i) w(i, i) = 0.0;
    return w;
}

NetworkParams initialize_network(const NetworkShape& shape, std::uint64_t root_seed) {
    NetworkParams p;
    p.w_in = uniform_fan_in_init(shape.n_hidden, shape.n_in, shape.n_in, derive_seed(root_seed, "init/w_in"),
                                    shape.io_bound);
    if (shape.recurrent) {
        p.w_rec = kaiming_uniform_recurrent_init(shape.n_hidden, derive_seed(root_seed, "init/w_rec"),
                                                  shape.rec_bound);
    } else {
        p.w_rec = Matrix(shape.n_hidden, shape.n_hidden);
    }
    p.w_out = uniform_fan_in_init(shape.n_out, shape.n_hidden, shape.n_hidden,
                                     derive_seed(root_seed, "init/w_out"), shape.io_bound);
    p.tau_rec_ms = shape.tau_rec_ms;
    p.tau_out_ms = shape.tau_out_ms;
    p.u_th = shape.u_th;
    p.validate();
    return p;
}

// ---- flat views ----

std::size_t parameter_count(const NetworkParams& p) {
    return p.w_in.size() + p.w_rec.size() + p.w_out.size() + 3;
}

std::vector<double> flatten(const NetworkParams& p) {
    std::vector<double> v;
    v.reserve(parameter_count(p));
    for (const Matrix* m : {&p.w_in, &p.w_rec, &p.w_out}) v.insert(v.end(), m->values().begin(), m->values().end());
    v.push_back(p.tau_rec_ms);
    v.push_back(p.tau_out_ms);
    v.push_back(p.u_th);
    return v;
}

void assign_flat(NetworkParams& p, std::span<const double> flat) {
    if (flat.size() != parameter_count(p)) throw InvalidArgument("assign_flat: size mismatch");
    std::size_t off = 0;
    for (Matrix* m : {&p.w_in, &p.w_rec, &p.w_out}) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m->size(), m->values().begin());
        off += m->size();
    }
    p.tau_rec_ms = flat[off];
    p.tau_out_ms = flat[off + 1];
    p.u_th = flat[off + 2];
}

std::vector<double> flatten(const Gradients& g) {
    std::vector<double> v;
    v.reserve(g.d_w_in.size() + g.d_w_rec.size() + g.d_w_out.size() + 3);
    for (const Matrix* m : {&g.d_w_in, &g.d_w_rec, &g.d_w_out}) v.insert(v.end(), m->values().begin(), m->values().end());
    v.push_back(g.d_tau_rec);
    v.push_back(g.d_tau_out);
    v.push_back(g.d_u_th);
    return v;
}

void apply_mask(Gradients& g, const TrainableMask& mask) {
    if (!mask.w_in) g.d_w_in.fill(0.0);
    if (!mask.w_rec) g.d_w_rec.fill(0.0);
    if (!mask.w_out) g.d_w_out.fill(0.0);
    if (!mask.tau_rec) g.d_tau_rec = 0.0;
    if (!mask.tau_out) g.d_tau_out = 0.0;
    if (!mask.u_th) g.d_u_th = 0.0;
}

// ---- optimisers ----

OptimizerState OptimizerState::init(const NetworkParams& params, const MadgradConfig& cfg) {
    OptimizerState st;
    st.cfg = cfg;
    st.x0 = flatten(params);
    st.s.assign(st.x0.size(), 0.0);
    st.nu.assign(st.x0.size(), 0.0);
    return st;
}

void madgrad_step(OptimizerState& st, NetworkParams& params, const Gradients& grads) {
    const auto g = flatten(grads);
    auto x = flatten(params);
    if (g.size() != st.x0.size() || x.size() != st.x0.size()) {
        throw InvalidArgument("madgrad_step: optimizer state does not match parameters");
    }
    const double lambda = st.cfg.lr * std::sqrt(static_cast<double>(st.k) + 1.0);
    const double c = 1.0 - st.cfg.momentum;
    for (std::size_t i = 0; i < x.size(); ++i) {
        st.s[i] += lambda * g[i];
        st.nu[i] += lambda * g[i] * g[i];
        const double z = st.x0[i] - st.s[i] / (std::cbrt(st.nu[i]) + st.cfg.eps);
        x[i] += c * (z - x[i]);
    }
    ++st.k;
    assign_flat(params, x);
}

void sgd_step(NetworkParams& params, const Gradients& grads, double lr) {
    const auto g = flatten(grads);
    auto x = flatten(params);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * g[i];
    assign_flat(params, x);
}

// ---- constraints ----

void Constraints::validate() const {
    for (const ClampRange* r : {&tau_rec, &tau_out}) {
        if (!(r->lo > 0.0) || !(r->hi >= r->lo)) {
            throw InvalidArgument("constraints: time-constant clamp must satisfy 0 < lo <= hi");
        }
    }
}

void apply_constraints(NetworkParams& p, const Constraints& c) {
    p.tau_rec_ms = std::clamp(p.tau_rec_ms, c.tau_rec.lo, c.tau_rec.hi);
    p.tau_out_ms = std::clamp(p.tau_out_ms, c.tau_out.lo, c.tau_out.hi);
    if (c.no_recurrence) {
        p.w_rec.fill(0.0);
    } else {
        for (std::size_t i = 0; i < p.w_rec.rows(); ++i) p.w_rec(i, i) = 0.0;
    }
}

void check_constraints(const NetworkParams& p, const Constraints& c) {
    for (std::size_t i = 0; i < p.w_rec.rows(); ++i) {
        if (p.w_rec(i, i) != 0.0) throw std::logic_error("invariant violated: diag(w_rec) != 0");
    }
    if (p.tau_rec_ms < c.tau_rec.lo || p.tau_rec_ms > c.tau_rec.hi) {
        throw std::logic_error("invariant violated: tau_rec outside clamp range");
    }
    if (p.tau_out_ms < c.tau_out.lo || p.tau_out_ms > c.tau_out.hi) {
        throw std::logic_error("invariant violated: tau_out outside clamp range");
    }
}

// ---- episodes ----

ForwardTrace run_episode(const NetworkParams& params, const DelaySchedule& delays, const Episode& ep,
                         const SimConfig& sim) {
    return std::visit([&](const auto& input) { return forward(params, delays, input, sim); }, ep.input);
}

SampleResult evaluate_sample(const NetworkParams& params, const DelaySchedule& delays, const Episode& ep,
                             const SimConfig& sim, const LossConfig& loss, bool want_grads) {
    const ForwardTrace trace = run_episode(params, delays, ep, sim);
    const auto logits = window_mean_output(trace, ep.readout);
    const SpikeTrain hidden = trace.hidden_spikes();

    SampleResult r;
    r.net_loss = cross_entropy(logits, ep.label);
    const double bf_scale =
        loss.bf_reduction == BfReduction::mean_over_time ? 1.0 / static_cast<double>(trace.steps) : 1.0;
    r.bf_loss = bf_scale *
                (loss.bf_per_neuron ? branching_factor_loss_per_neuron(hidden) : branching_factor_loss(hidden));
    r.total = total_loss(r.net_loss, r.bf_loss, loss);
    std::size_t decision = 0;
    for (std::size_t o = 1; o < logits.size(); ++o)
        if (logits[o] > logits[decision]) decision = o;
    r.correct = decision == ep.label;
    r.spikes = trace.spike_count();
    r.steps = trace.steps;
    if (!want_grads) return r;

    LossAdjoints adj;
    adj.d_u_out = Matrix(trace.steps, trace.n_out);
    const auto dlogits = cross_entropy_grad(logits, ep.label);
    const double inv_len = 1.0 / static_cast<double>(ep.readout.length());
    for (std::size_t t = ep.readout.begin; t < ep.readout.end; ++t) {
        for (std::size_t o = 0; o < trace.n_out; ++o) adj.d_u_out(t, o) = dlogits[o] * inv_len;
    }
    if (loss.beta > 0.0) adj.d_spikes = branching_factor_grad(hidden, loss.beta * bf_scale, loss.bf_per_neuron);
    r.grads = backward(trace, params, delays, adj);
    return r;
}

// ---- epoch loop ----

void TrainConfig::validate() const {
    if (samples_per_epoch == 0 && epochs > 0) throw InvalidArgument("train: samples_per_epoch must be positive");
    if (batch_size == 0) throw InvalidArgument("train: batch_size must be positive");
    if (threads == 0) throw InvalidArgument("train: threads must be positive");
    if (!(madgrad.lr > 0.0) || !(madgrad.momentum >= 0.0 && madgrad.momentum < 1.0) || !(madgrad.eps >= 0.0)) {
        throw InvalidArgument("train: madgrad needs lr > 0, 0 <= momentum < 1, eps >= 0");
    }
    if (!(sgd_lr > 0.0)) throw InvalidArgument("train: sgd lr must be positive");
    if (!(sim.dt_ms > 0.0)) throw InvalidArgument("train: dt must be positive");
    loss.validate();
    constraints.validate();
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; results are written
// by index, so the caller's reduction order stays fixed.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(threads, n);
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

double evaluate_accuracy(const NetworkParams& params, const DelaySchedule& delays, const EpisodeSource& source,
                         std::size_t n, const SimConfig& sim, std::size_t threads) {
    if (n == 0) return 0.0;
    std::vector<std::uint8_t> correct(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        const Episode ep = source.eval_episode(i);
        const ForwardTrace tr = run_episode(params, delays, ep, sim);
        correct[i] = readout_decision(tr, ep.readout) == ep.label;
    });
    std::size_t hits = 0;
    for (auto c : correct) hits += c;
    return static_cast<double>(hits) / static_cast<double>(n);
}

TrainResult train(const TrainConfig& cfg, NetworkParams init, const DelaySchedule& delays,
                  const EpisodeSource& source, const TrainHooks& hooks) {
    cfg.validate();
    TrainResult result;
    result.params = std::move(init);
    apply_constraints(result.params, cfg.constraints);
    result.optimizer = OptimizerState::init(result.params, cfg.madgrad);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0, bf_sum = 0.0;
        std::size_t hits = 0, spikes = 0, neuron_ticks = 0;

        for (std::size_t start = 0; start < cfg.samples_per_epoch; start += cfg.batch_size) {
            const std::size_t batch = std::min(cfg.batch_size, cfg.samples_per_epoch - start);
            std::vector<SampleResult> results(batch);
            try {
                parallel_for(batch, cfg.threads, [&](std::size_t b) {
                    const Episode ep = source.train_episode(epoch, start + b);
                    results[b] = evaluate_sample(result.params, delays, ep, cfg.sim, cfg.loss, true);
                });
            } catch (const NumericalDivergence& e) {
                throw TrainingDiverged(e.what(), result.params, result.optimizer);
            }

            Gradients grads = Gradients::zeros_like(result.params);
            for (const auto& r : results) {
                grads += r.grads;
                loss_sum += r.total;
                bf_sum += r.bf_loss;
                hits += r.correct;
                spikes += r.spikes;
                neuron_ticks += r.steps * result.params.n_hidden();
            }
            grads *= 1.0 / static_cast<double>(batch);
            apply_mask(grads, cfg.mask);
            if (!grads.all_finite() || !std::isfinite(loss_sum)) {
                throw TrainingDiverged("non-finite loss or gradient at step " + std::to_string(step), result.params,
                                       result.optimizer);
            }
            grads = clip_gradient_norm(std::move(grads), cfg.loss.clip_max_norm);
            if (hooks.gradient_dump) hooks.gradient_dump(step, grads);

            NetworkParams before = result.params;
            if (cfg.optimizer == OptimizerKind::madgrad) {
                madgrad_step(result.optimizer, result.params, grads);
            } else {
                sgd_step(result.params, grads, cfg.sgd_lr);
            }
            apply_constraints(result.params, cfg.constraints);
            try {
                result.params.validate();
            } catch (const InvalidArgument& e) {
                throw TrainingDiverged(std::string("parameters left the valid region: ") + e.what(), std::move(before),
                                       result.optimizer);
            }
            if (cfg.assert_constraints) check_constraints(result.params, cfg.constraints);
            if (hooks.after_batch) hooks.after_batch(step, result.params);
            ++step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        const auto n = static_cast<double>(cfg.samples_per_epoch);
        m.train_loss = loss_sum / n;
        m.train_acc = static_cast<double>(hits) / n;
        m.bf_loss = bf_sum / n;
        m.mean_spike_rate = neuron_ticks ? static_cast<double>(spikes) / static_cast<double>(neuron_ticks) : 0.0;
        m.test_acc = evaluate_accuracy(result.params, delays, source, cfg.eval_samples, cfg.sim, cfg.threads);
        result.history.push_back(m);
        if (hooks.after_epoch) hooks.after_epoch(m);
    }
    return result;
}

void write_metrics_header(std::ostream& out) {
    out << "epoch,train_loss,train_acc,test_acc,mean_spike_rate,bf_loss\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
    const auto old = out.precision(17);
    out << m.epoch << ',' << m.train_loss << ',' << m.train_acc << ',' << m.test_acc << ',' << m.mean_spike_rate << ','
        << m.bf_loss << '\n';
    out.precision(old);
}

// ---- checkpoints ----

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
    const auto& p = ck.params;
    binary::write_magic(out, "DNCK");
    binary::write<std::uint32_t>(out, 1);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(p.n_in()));
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(p.n_hidden()));
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(p.n_out()));
    binary::write<double>(out, p.tau_rec_ms);
    binary::write<double>(out, p.tau_out_ms);
    binary::write<double>(out, p.u_th);
    binary::write_array<double>(out, p.w_in.values());
    binary::write_array<double>(out, p.w_rec.values());
    binary::write_array<double>(out, p.w_out.values());
    if (ck.delays.size() != p.n_hidden()) throw InvalidArgument("checkpoint: delay schedule size mismatch");
    binary::write<double>(out, ck.delays.dt_ms);
    binary::write<std::uint8_t>(out, ck.sim.reset == ResetMode::soft_subtract ? 0 : 1);
    binary::write_array<double>(out, ck.delays.delay_ms);
    binary::write<std::uint8_t>(out, ck.optimizer ? 1 : 0);
    if (ck.optimizer) {
        const auto& o = *ck.optimizer;
        binary::write<std::uint64_t>(out, o.k);
        binary::write<double>(out, o.cfg.lr);
        binary::write<double>(out, o.cfg.momentum);
        binary::write<double>(out, o.cfg.eps);
        binary::write<std::uint64_t>(out, o.x0.size());
        binary::write_array<double>(out, o.s);
        binary::write_array<double>(out, o.nu);
        binary::write_array<double>(out, o.x0);
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    try {
        binary::expect_magic(in, "DNCK");
        const auto version = binary::read<std::uint32_t>(in);
        if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
        const auto n_in = binary::read<std::uint32_t>(in);
        const auto n_hidden = binary::read<std::uint32_t>(in);
        const auto n_out = binary::read<std::uint32_t>(in);
        Checkpoint ck;
        ck.params = NetworkParams(n_in, n_hidden, n_out);
        ck.params.tau_rec_ms = binary::read<double>(in);
        ck.params.tau_out_ms = binary::read<double>(in);
        ck.params.u_th = binary::read<double>(in);
        binary::read_array<double>(in, ck.params.w_in.values());
        binary::read_array<double>(in, ck.params.w_rec.values());
        binary::read_array<double>(in, ck.params.w_out.values());
        const double dt = binary::read<double>(in);
        ck.sim.dt_ms = dt;
        ck.sim.reset = binary::read<std::uint8_t>(in) == 0 ? ResetMode::soft_subtract : ResetMode::hard_zero;
        std::vector<double> delay_ms(n_hidden);
        binary::read_array<double>(in, std::span<double>(delay_ms));
        ck.delays = DelaySchedule::from_ms(std::move(delay_ms), dt);
        if (binary::read<std::uint8_t>(in)) {
            OptimizerState o;
            o.k = binary::read<std::uint64_t>(in);
            o.cfg.lr = binary::read<double>(in);
            o.cfg.momentum = binary::read<double>(in);
            o.cfg.eps = binary::read<double>(in);
            const auto len = binary::read<std::uint64_t>(in);
            if (len != parameter_count(ck.params)) throw std::runtime_error("optimizer state size mismatch");
            o.s.resize(len);
            o.nu.resize(len);
            o.x0.resize(len);
            binary::read_array<double>(in, std::span<double>(o.s));
            binary::read_array<double>(in, std::span<double>(o.nu));
            binary::read_array<double>(in, std::span<double>(o.x0));
            ck.optimizer = std::move(o);
        }
        ck.params.validate();
        return ck;
    } catch (const std::runtime_error& e) {
        throw InvalidArgument(std::string("checkpoint: ") + e.what());
    }
}

} // namespace delaynet
