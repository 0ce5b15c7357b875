#pragma once

// Evidence-accumulation (left/right cue counting) episodes, the last-k-cues
// probabilistic baseline, and permuted sequential MNIST ingestion.

#include "delaynet/matrix.hpp"
#include "delaynet/network.hpp"
#include "delaynet/spike_train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace delaynet {

enum class Side : std::uint8_t { left = 0, right = 1 };

// Input layout: [left | right | noise | recall], group_size channels each.
struct CueTaskConfig {
    std::size_t n_cues = 7;
    double cue_ms = 150.0;
    double pause_ms = 50.0;
    double wait_min_ms = 500.0;
    double wait_max_ms = 1500.0;
    double recall_ms = 150.0;
    std::size_t group_size = 10;
    double cue_hz = 40.0;
    double noise_hz = 5.0;
    double recall_hz = 40.0;
    double dt_ms = 1.0;
    bool resample_ties = true;

    void validate() const;

    std::size_t channels() const noexcept { return 4 * group_size; }
    std::size_t left_channel(std::size_t k) const noexcept { return k; }
    std::size_t right_channel(std::size_t k) const noexcept { return group_size + k; }
    std::size_t noise_channel(std::size_t k) const noexcept { return 2 * group_size + k; }
    std::size_t recall_channel(std::size_t k) const noexcept { return 3 * group_size + k; }

    // n_cues * (cue + pause) + wait + recall
    double episode_ms(double wait_ms) const noexcept;
    std::size_t episode_steps(double wait_ms) const;
};

struct CueSample {
    SpikeTrain spikes;
    std::size_t label = 0;  // index of the majority Side
    std::vector<Side> cues;
    TimeWindow recall;
    double wait_ms = 0.0;
};

// Majority side; throws InvalidArgument on a tie.
std::size_t majority_label(const std::vector<Side>& cues);

CueSample generate_cue_sample(const CueTaskConfig& cfg, std::uint64_t seed);

// Fixed wait between the last pause and the recall cue.
CueSample generate_wait_variant(const CueTaskConfig& cfg, double wait_ms, std::uint64_t seed);

CueSample generate_ncue_variant(const CueTaskConfig& cfg, std::size_t n_cues, std::uint64_t seed);

// Exact accuracy of deciding from the last `memory` cues only, over uniformly
// drawn tie-free sequences of n_cues; a tie inside the window earns 1/2.
double probabilistic_baseline_accuracy(std::size_t n_cues, std::size_t memory = 7);

// Episode file (little-endian):
//   char[4] "DNEP", u32 version = 1, u64 steps, u32 channels, f64 dt_ms,
//   u8 label, f64 wait_ms, u32 n_cues, u8 cues[n_cues], u64 recall_begin,
//   u64 recall_end, u8 spikes[steps * channels]
void write_episode(std::ostream& out, const CueSample& sample);
CueSample read_episode(std::istream& in);

// ---- permuted sequential MNIST ----

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
};

// Plain or gzip-compressed IDX files (magic 0x00000803 / 0x00000801, big-endian
// header). Throws IoError naming the path on missing or malformed files.
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

// Fisher-Yates permutation of {0..size-1} from the seed.
std::vector<std::size_t> pixel_permutation(std::size_t size, std::uint64_t seed);

class PsMnist {
public:
    // split is "train" or "t10k"; limit caps the number of images kept.
    static PsMnist load(const std::filesystem::path& data_dir, const std::string& split,
                        std::uint64_t permutation_seed, std::optional<std::size_t> limit = std::nullopt);

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t sequence_length() const noexcept { return permutation_.size(); }
    const std::vector<std::size_t>& permutation() const noexcept { return permutation_; }
    std::uint8_t label(std::size_t i) const { return labels_.at(i); }

    // sequence_length x 1 analog currents in [0, 1], pixels in permuted order.
    Matrix sequence(std::size_t i) const;

    // Raw (unpermuted) pixels of image i.
    std::span<const std::uint8_t> raw_pixels(std::size_t i) const;

private:
    IdxImages images_;
    std::vector<std::uint8_t> labels_;
    std::vector<std::size_t> permutation_;
};

} // namespace delaynet
