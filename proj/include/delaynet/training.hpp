#pragma once

// Losses, initialisation, the MADGRAD optimiser, parameter constraints and the
// epoch loop.

#include "delaynet/bptt.hpp"
#include "delaynet/matrix.hpp"
#include "delaynet/network.hpp"
#include "delaynet/spike_train.hpp"
#include "delaynet/topology.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace delaynet {

// ---- losses ----

enum class BfReduction {
    sum,             // sum over timesteps
    mean_over_time,  // divided by the episode length
};

struct LossConfig {
    double beta = 0.001;
    double clip_max_norm = 0.01;
    // Penalise per-neuron activity changes instead of the population total.
    bool bf_per_neuron = false;
    BfReduction bf_reduction = BfReduction::sum;

    void validate() const;
};

// sum_t (N[t] - N[t-1])^2 with N[t] the population spike count and N[-1] = 0.
// Throws InvalidArgument on non-binary entries.
double branching_factor_loss(const SpikeTrain& spikes);

// sum_t sum_i (n_i[t] - n_i[t-1])^2
double branching_factor_loss_per_neuron(const SpikeTrain& spikes);

// d loss / d n_i[t], scaled by `scale`; steps x channels.
Matrix branching_factor_grad(const SpikeTrain& spikes, double scale, bool per_neuron = false);

double total_loss(double net_loss, double bf_loss, const LossConfig& cfg);

// -log softmax(logits)[label], max-subtracted.
double cross_entropy(std::span<const double> logits, std::size_t label);

// softmax(logits) - onehot(label)
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

// ---- initialisation ----

enum class InitBound {
    sqrt6_over_n,       // sqrt(6) / fan_in, the recurrent-pool bound
    sqrt_6_over_n,      // sqrt(6 / fan_in), He et al.
};

double init_bound(InitBound kind, std::size_t fan_in);

// i.i.d. U(-b, b) with b = init_bound(kind, fan_in).
Matrix uniform_fan_in_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::uint64_t seed,
                           InitBound kind = InitBound::sqrt6_over_n);

// n x n, bound sqrt(6)/n by default, zero diagonal.
Matrix kaiming_uniform_recurrent_init(std::size_t n, std::uint64_t seed,
                                      InitBound kind = InitBound::sqrt6_over_n);

struct NetworkShape {
    std::size_t n_in = 40;
    std::size_t n_hidden = 125;
    std::size_t n_out = 2;
    double tau_rec_ms = 20.0;
    double tau_out_ms = 20.0;
    double u_th = 1.0;
    bool recurrent = true;
    // Uniform init bounds for w_in/w_out and for w_rec.
    InitBound io_bound = InitBound::sqrt_6_over_n;
    InitBound rec_bound = InitBound::sqrt6_over_n;
};

// Weights drawn from streams derived from the root seed ("init/w_in", ...).
NetworkParams initialize_network(const NetworkShape& shape, std::uint64_t root_seed);

// ---- parameter vector view ----

// Layout: w_in, w_rec, w_out (row-major), tau_rec, tau_out, u_th.
std::size_t parameter_count(const NetworkParams& params);
std::vector<double> flatten(const NetworkParams& params);
void assign_flat(NetworkParams& params, std::span<const double> flat);
std::vector<double> flatten(const Gradients& grads);

// Parameter groups the optimiser may move.
struct TrainableMask {
    bool w_in = true;
    bool w_rec = true;
    bool w_out = true;
    bool tau_rec = true;
    bool tau_out = true;
    bool u_th = true;
};

void apply_mask(Gradients& grads, const TrainableMask& mask);

// ---- optimisers ----

// Dual-averaged adaptive update:
//   lambda_k = lr * sqrt(k + 1)
//   s  += lambda_k g,  nu += lambda_k g*g
//   z   = x0 - s / (cbrt(nu) + eps)
//   x   = (1 - c) x + c z,  c = 1 - momentum
struct MadgradConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double eps = 1e-6;

    bool operator==(const MadgradConfig&) const = default;
};

struct OptimizerState {
    MadgradConfig cfg;
    std::uint64_t k = 0;
    std::vector<double> s;
    std::vector<double> nu;
    std::vector<double> x0;

    static OptimizerState init(const NetworkParams& params, const MadgradConfig& cfg);
    bool operator==(const OptimizerState&) const = default;
};

// Updates params in place. Does not apply constraints.
void madgrad_step(OptimizerState& state, NetworkParams& params, const Gradients& grads);

// Plain gradient descent, x -= lr * g.
void sgd_step(NetworkParams& params, const Gradients& grads, double lr);

// ---- constraints ----

struct ClampRange {
    double lo = 0.1;
    double hi = 50.0;
};

struct Constraints {
    ClampRange tau_rec{0.1, 50.0};
    ClampRange tau_out{0.1, 50.0};
    // Zero the whole recurrent matrix (feed-forward ablation).
    bool no_recurrence = false;

    void validate() const;
};

// Clamp both time constants, zero diag(w_rec). u_th is left free.
void apply_constraints(NetworkParams& params, const Constraints& c);

// Throws std::logic_error naming the violated invariant.
void check_constraints(const NetworkParams& params, const Constraints& c);

// ---- episodes and the epoch loop ----

struct Episode {
    std::variant<SpikeTrain, Matrix> input;
    std::size_t label = 0;
    TimeWindow readout;
};

class EpisodeSource {
public:
    virtual ~EpisodeSource() = default;
    virtual Episode train_episode(std::size_t epoch, std::size_t index) const = 0;
    virtual Episode eval_episode(std::size_t index) const = 0;
};

ForwardTrace run_episode(const NetworkParams& params, const DelaySchedule& delays, const Episode& ep,
                         const SimConfig& sim);

struct SampleResult {
    double net_loss = 0.0;
    double bf_loss = 0.0;
    double total = 0.0;
    bool correct = false;
    std::size_t spikes = 0;
    std::size_t steps = 0;
    Gradients grads;
};

// Forward, loss and (if want_grads) reverse pass for one episode.
SampleResult evaluate_sample(const NetworkParams& params, const DelaySchedule& delays, const Episode& ep,
                             const SimConfig& sim, const LossConfig& loss, bool want_grads);

enum class OptimizerKind { madgrad, sgd };

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t samples_per_epoch = 256;
    std::size_t batch_size = 64;
    std::size_t eval_samples = 512;
    OptimizerKind optimizer = OptimizerKind::madgrad;
    MadgradConfig madgrad;
    double sgd_lr = 0.01;
    LossConfig loss;
    Constraints constraints;
    TrainableMask mask;
    SimConfig sim;
    std::size_t threads = 1;
    // Verify constraints after every batch and throw on violation.
    bool assert_constraints = false;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double mean_spike_rate = 0.0;  // spikes per neuron per tick
    double bf_loss = 0.0;
};

struct TrainHooks {
    std::function<void(std::size_t batch, const NetworkParams&)> after_batch;
    std::function<void(const EpochMetrics&)> after_epoch;
    std::function<void(std::size_t step, const Gradients&)> gradient_dump;
};

struct TrainResult {
    NetworkParams params;
    OptimizerState optimizer;
    std::vector<EpochMetrics> history;
};

// Thrown when a loss or gradient turns non-finite; carries the last finite state.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, NetworkParams last_good, OptimizerState opt)
        : std::runtime_error(what), last_good_(std::move(last_good)), optimizer_(std::move(opt)) {}
    const NetworkParams& last_good() const noexcept { return last_good_; }
    const OptimizerState& optimizer() const noexcept { return optimizer_; }

private:
    NetworkParams last_good_;
    OptimizerState optimizer_;
};

TrainResult train(const TrainConfig& cfg, NetworkParams init, const DelaySchedule& delays,
                  const EpisodeSource& source, const TrainHooks& hooks = {});

// Accuracy over source.eval_episode(0 .. n-1).
double evaluate_accuracy(const NetworkParams& params, const DelaySchedule& delays, const EpisodeSource& source,
                         std::size_t n, const SimConfig& sim, std::size_t threads = 1);

// epoch,train_loss,train_acc,test_acc,mean_spike_rate,bf_loss
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

// ---- checkpoints ----

// Little-endian:
//   char[4] "DNCK", u32 version = 1,
//   u32 n_in, u32 n_hidden, u32 n_out, f64 tau_rec_ms, f64 tau_out_ms, f64 u_th,
//   f64 w_in[], f64 w_rec[], f64 w_out[],
//   f64 dt_ms, u8 reset_mode, f64 delay_ms[n_hidden],
//   u8 has_optimizer; if 1: u64 k, f64 lr, f64 momentum, f64 eps, u64 len,
//   f64 s[len], f64 nu[len], f64 x0[len]
struct Checkpoint {
    NetworkParams params;
    DelaySchedule delays;
    SimConfig sim;
    std::optional<OptimizerState> optimizer;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

} // namespace delaynet
