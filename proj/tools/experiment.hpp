#pragma once

// Experiment configuration for the command-line runner: a versioned YAML
// document mapped onto the library's config structs.

#include "delaynet/sources.hpp"
#include "delaynet/tasks.hpp"
#include "delaynet/topology.hpp"
#include "delaynet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace delaynet::cli {

inline constexpr int config_version = 1;

// A config problem with the 1-based line it was found on (0 when unknown).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& what);
    int line() const noexcept { return line_; }

private:
    int line_;
};

enum class TaskKind { cue, psmnist };
enum class DelayMode { none, fraction, radius };

struct PsMnistSpec {
    std::filesystem::path data_dir;
    std::size_t train_limit = 0;  // 0 keeps every image
    std::size_t test_limit = 0;
    std::size_t readout_ticks = 1;
};

struct DelaySpec {
    DelayMode mode = DelayMode::fraction;
    std::vector<double> delays_ms{0.0, 80.0, 100.0};
    std::vector<double> fractions{0.176, 0.424, 0.4};
    std::vector<double> radius_fracs;  // one fewer than delays_ms
};

struct ExperimentConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "runs/run";
    TaskKind task = TaskKind::cue;
    CueTaskConfig cue;
    PsMnistSpec psmnist;
    NetworkShape network;
    ResetMode reset = ResetMode::soft_subtract;
    double dt_ms = 1.0;
    DelaySpec delays;
    TrainConfig train;
    std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint

    // Canonical JSON of every field; the config hash is taken over this text.
    std::string canonical_json() const;
    // 16 hex digits.
    std::string hash() const;
};

// Throws ConfigError. `source` names the document in messages.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Built from the config seed: "delays" for fraction mode, "topology" for
// radius mode.
DelaySchedule build_delays(const ExperimentConfig& cfg);
NetworkParams build_network(const ExperimentConfig& cfg);
std::unique_ptr<EpisodeSource> build_source(const ExperimentConfig& cfg);

} // namespace delaynet::cli
