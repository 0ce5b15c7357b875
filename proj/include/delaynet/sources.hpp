#pragma once

// Episode streams for the training loop. Each episode is generated from a seed
// derived from the root seed and its (epoch, index) or evaluation index, so any
// episode can be regenerated independently of the others.

#include "delaynet/tasks.hpp"
#include "delaynet/training.hpp"

#include <cstdint>
#include <memory>
#include <optional>

namespace delaynet {

class CueTaskSource : public EpisodeSource {
public:
    CueTaskSource(CueTaskConfig cfg, std::uint64_t root_seed);

    // Evaluate at a fixed wait (generalisation tests); training is unaffected.
    void set_eval_wait(std::optional<double> wait_ms) { eval_wait_ms_ = wait_ms; }
    void set_eval_cues(std::optional<std::size_t> n_cues) { eval_cues_ = n_cues; }

    Episode train_episode(std::size_t epoch, std::size_t index) const override;
    Episode eval_episode(std::size_t index) const override;

    const CueTaskConfig& config() const noexcept { return cfg_; }

private:
    CueTaskConfig cfg_;
    std::uint64_t root_;
    std::optional<double> eval_wait_ms_;
    std::optional<std::size_t> eval_cues_;
};

Episode to_episode(CueSample sample);

// Training draws images uniformly with replacement from `train`; evaluation walks
// `test` in order (wrapping). The readout window is the final readout_ticks.
class PsMnistSource : public EpisodeSource {
public:
    PsMnistSource(std::shared_ptr<const PsMnist> train, std::shared_ptr<const PsMnist> test,
                  std::uint64_t root_seed, std::size_t readout_ticks = 1);

    Episode train_episode(std::size_t epoch, std::size_t index) const override;
    Episode eval_episode(std::size_t index) const override;

private:
    Episode make(const PsMnist& set, std::size_t i) const;

    std::shared_ptr<const PsMnist> train_;
    std::shared_ptr<const PsMnist> test_;
    std::uint64_t root_;
    std::size_t readout_ticks_;
};

} // namespace delaynet
