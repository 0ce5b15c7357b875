#include "delaynet/tasks.hpp"

#include "delaynet/binary_io.hpp"
#include "delaynet/errors.hpp"
#include "delaynet/rng.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace delaynet {

void CueTaskConfig::validate() const {
    if (n_cues == 0) throw InvalidArgument("cue task: n_cues must be positive");
    if (n_cues % 2 == 0 && !resample_ties) {
        throw InvalidArgument("cue task: even n_cues requires resample_ties");
    }
    if (!(cue_ms > 0.0) || !(pause_ms >= 0.0) || !(recall_ms > 0.0)) {
        throw InvalidArgument("cue task: durations must be positive");
    }
    if (!(wait_min_ms >= 0.0) || !(wait_max_ms >= wait_min_ms)) {
        throw InvalidArgument("cue task: wait range must satisfy 0 <= min <= max");
    }
    if (group_size == 0) throw InvalidArgument("cue task: group_size must be positive");
    if (!(dt_ms > 0.0)) throw InvalidArgument("cue task: dt must be positive");
    for (double hz : {cue_hz, noise_hz, recall_hz}) {
        if (!(hz >= 0.0) || hz * dt_ms / 1000.0 > 1.0) {
            throw InvalidArgument("cue task: rates must lie in [0, 1000 / dt] Hz");
        }
    }
}

double CueTaskConfig::episode_ms(double wait_ms) const noexcept {
    return static_cast<double>(n_cues) * (cue_ms + pause_ms) + wait_ms + recall_ms;
}

std::size_t CueTaskConfig::episode_steps(double wait_ms) const {
    return static_cast<std::size_t>(std::llround(episode_ms(wait_ms) / dt_ms));
}

std::size_t majority_label(const std::vector<Side>& cues) {
    std::size_t right = 0;
    for (Side s : cues) right += s == Side::right;
    const std::size_t left = cues.size() - right;
    if (left == right) throw InvalidArgument("cue sequence is tied");
    return left > right ? 0 : 1;
}

namespace {

std::size_t ticks(double ms, double dt) {
    return static_cast<std::size_t>(std::llround(ms / dt));
}

CueSample generate(const CueTaskConfig& cfg, std::optional<double> fixed_wait_ms, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    CueSample s;

    std::size_t right = 0;
    do {
        s.cues.clear();
        right = 0;
        for (std::size_t i = 0; i < cfg.n_cues; ++i) {
            const Side side = (rng() >> 63) ? Side::right : Side::left;
            right += side == Side::right;
            s.cues.push_back(side);
        }
    } while (2 * right == cfg.n_cues);
    s.label = majority_label(s.cues);

    if (fixed_wait_ms) {
        s.wait_ms = *fixed_wait_ms;
    } else {
        const std::size_t lo = ticks(cfg.wait_min_ms, cfg.dt_ms);
        const std::size_t hi = ticks(cfg.wait_max_ms, cfg.dt_ms);
        s.wait_ms = static_cast<double>(uniform_int(rng, lo, hi)) * cfg.dt_ms;
    }

    const std::size_t cue_ticks = ticks(cfg.cue_ms, cfg.dt_ms);
    const std::size_t period_ticks = ticks(cfg.cue_ms + cfg.pause_ms, cfg.dt_ms);
    const std::size_t recall_begin = cfg.n_cues * period_ticks + ticks(s.wait_ms, cfg.dt_ms);
    const std::size_t steps = cfg.episode_steps(s.wait_ms);
    s.recall = {recall_begin, steps};
    s.spikes = SpikeTrain(steps, cfg.channels(), cfg.dt_ms);

    const double p_cue = cfg.cue_hz * cfg.dt_ms / 1000.0;
    const double p_noise = cfg.noise_hz * cfg.dt_ms / 1000.0;
    const double p_recall = cfg.recall_hz * cfg.dt_ms / 1000.0;
    for (std::size_t t = 0; t < steps; ++t) {
        auto row = s.spikes.row(t);
        const std::size_t cue_index = t / period_ticks;
        const bool in_cue = cue_index < cfg.n_cues && (t % period_ticks) < cue_ticks;
        const bool in_recall = t >= recall_begin;
        for (std::size_t k = 0; k < cfg.group_size; ++k) {
            const bool fire = bernoulli(rng, p_cue);
            if (in_cue) {
                const std::size_t ch = s.cues[cue_index] == Side::left ? cfg.left_channel(k) : cfg.right_channel(k);
                row[ch] = fire;
            }
        }
        for (std::size_t k = 0; k < cfg.group_size; ++k) row[cfg.noise_channel(k)] = bernoulli(rng, p_noise);
        for (std::size_t k = 0; k < cfg.group_size; ++k) {
            const bool fire = bernoulli(rng, p_recall);
            if (in_recall) row[cfg.recall_channel(k)] = fire;
        }
    }
    return s;
}

} // namespace

CueSample generate_cue_sample(const CueTaskConfig& cfg, std::uint64_t seed) {
    return generate(cfg, std::nullopt, seed);
}

CueSample generate_wait_variant(const CueTaskConfig& cfg, double wait_ms, std::uint64_t seed) {
    if (!(wait_ms >= 0.0) || !std::isfinite(wait_ms)) throw InvalidArgument("wait variant: wait must be non-negative");
    return generate(cfg, wait_ms, seed);
}

CueSample generate_ncue_variant(const CueTaskConfig& cfg, std::size_t n_cues, std::uint64_t seed) {
    CueTaskConfig c = cfg;
    c.n_cues = n_cues;
    return generate(c, std::nullopt, seed);
}

namespace {

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
}

} // namespace

double probabilistic_baseline_accuracy(std::size_t n_cues, std::size_t memory) {
    if (n_cues == 0) throw InvalidArgument("baseline: n_cues must be positive");
    if (memory == 0) throw InvalidArgument("baseline: memory must be positive");
    const std::size_t window = std::min(memory, n_cues);
    const std::size_t head = n_cues - window;
    double credit = 0.0;
    double total = 0.0;
    // Condition on the number of left cues in the remembered tail and in the
    // forgotten head; every such sequence is equally likely.
    for (std::size_t tail_left = 0; tail_left <= window; ++tail_left) {
        for (std::size_t head_left = 0; head_left <= head; ++head_left) {
            const std::size_t left = tail_left + head_left;
            const std::size_t right = n_cues - left;
            if (left == right) continue;
            const double count = binomial(window, tail_left) * binomial(head, head_left);
            const std::size_t tail_right = window - tail_left;
            double c = 0.0;
            if (tail_left == tail_right) {
                c = 0.5;
            } else {
                c = (tail_left > tail_right) == (left > right) ? 1.0 : 0.0;
            }
            credit += c * count;
            total += count;
        }
    }
    return credit / total;
}

void write_episode(std::ostream& out, const CueSample& s) {
    binary::write_magic(out, "DNEP");
    binary::write<std::uint32_t>(out, 1);
    binary::write<std::uint64_t>(out, s.spikes.steps);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(s.spikes.channels));
    binary::write<double>(out, s.spikes.dt_ms);
    binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(s.label));
    binary::write<double>(out, s.wait_ms);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(s.cues.size()));
    for (Side c : s.cues) binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(c));
    binary::write<std::uint64_t>(out, s.recall.begin);
    binary::write<std::uint64_t>(out, s.recall.end);
    binary::write_array<std::uint8_t>(out, s.spikes.bits);
}

CueSample read_episode(std::istream& in) {
    try {
        binary::expect_magic(in, "DNEP");
        if (binary::read<std::uint32_t>(in) != 1) throw std::runtime_error("unsupported episode version");
        CueSample s;
        const auto steps = binary::read<std::uint64_t>(in);
        const auto channels = binary::read<std::uint32_t>(in);
        const auto dt = binary::read<double>(in);
        s.spikes = SpikeTrain(steps, channels, dt);
        s.label = binary::read<std::uint8_t>(in);
        s.wait_ms = binary::read<double>(in);
        const auto n_cues = binary::read<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < n_cues; ++i) {
            const auto c = binary::read<std::uint8_t>(in);
            if (c > 1) throw std::runtime_error("invalid cue side");
            s.cues.push_back(static_cast<Side>(c));
        }
        s.recall.begin = binary::read<std::uint64_t>(in);
        s.recall.end = binary::read<std::uint64_t>(in);
        binary::read_array<std::uint8_t>(in, s.spikes.bits);
        return s;
    } catch (const std::runtime_error& e) {
        throw InvalidArgument(std::string("episode file: ") + e.what());
    }
}

// ---- IDX ----

namespace {

struct GzCloser {
    void operator()(gzFile f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_whole(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError(path.string(), "file not found");
    GzHandle f(gzopen(path.c_str(), "rb"));
    if (!f) throw IoError(path.string(), "cannot open");
    std::vector<std::uint8_t> data;
    std::vector<std::uint8_t> chunk(1 << 16);
    for (;;) {
        const int got = gzread(f.get(), chunk.data(), static_cast<unsigned>(chunk.size()));
        if (got < 0) throw IoError(path.string(), "read/decompression error");
        if (got == 0) break;
        data.insert(data.end(), chunk.begin(), chunk.begin() + got);
    }
    return data;
}

std::uint32_t be32(const std::vector<std::uint8_t>& d, std::size_t off) {
    return (std::uint32_t{d[off]} << 24) | (std::uint32_t{d[off + 1]} << 16) | (std::uint32_t{d[off + 2]} << 8) |
           std::uint32_t{d[off + 3]};
}

// Resolves "name" or "name.gz" inside dir.
std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& name) {
    const auto plain = dir / name;
    if (std::filesystem::exists(plain)) return plain;
    const auto gz = dir / (name + ".gz");
    if (std::filesystem::exists(gz)) return gz;
    throw IoError(plain.string(), "file not found (also tried .gz)");
}

// Optional CHECKSUMS file next to the data: "<crc32 hex> <file name>" per line.
void verify_checksum(const std::filesystem::path& path) {
    const auto manifest = path.parent_path() / "CHECKSUMS";
    std::ifstream in(manifest);
    if (!in) return;
    std::string hex, name;
    while (in >> hex >> name) {
        if (name != path.filename().string()) continue;
        std::ifstream f(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
        if (crc != std::stoul(hex, nullptr, 16)) {
            std::cerr << "warning: checksum mismatch for " << path.string() << '\n';
        }
        return;
    }
}

} // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
    const auto d = read_whole(path);
    if (d.size() < 16 || be32(d, 0) != 0x00000803) throw IoError(path.string(), "not an IDX image file");
    IdxImages img;
    img.count = be32(d, 4);
    img.rows = be32(d, 8);
    img.cols = be32(d, 12);
    const std::size_t expected = img.count * img.rows * img.cols;
    if (d.size() != 16 + expected) throw IoError(path.string(), "truncated or oversized IDX image payload");
    img.pixels.assign(d.begin() + 16, d.end());
    return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    const auto d = read_whole(path);
    if (d.size() < 8 || be32(d, 0) != 0x00000801) throw IoError(path.string(), "not an IDX label file");
    const std::size_t count = be32(d, 4);
    if (d.size() != 8 + count) throw IoError(path.string(), "truncated or oversized IDX label payload");
    return {d.begin() + 8, d.end()};
}

std::vector<std::size_t> pixel_permutation(std::size_t size, std::uint64_t seed) {
    std::vector<std::size_t> p(size);
    for (std::size_t i = 0; i < size; ++i) p[i] = i;
    Rng rng(seed);
    for (std::size_t i = size; i > 1; --i) std::swap(p[i - 1], p[uniform_int(rng, 0, i - 1)]);
    return p;
}

PsMnist PsMnist::load(const std::filesystem::path& data_dir, const std::string& split,
                      std::uint64_t permutation_seed, std::optional<std::size_t> limit) {
    if (split != "train" && split != "t10k") throw InvalidArgument("psMNIST split must be train or t10k");
    const auto img_path = find_idx(data_dir, split + "-images-idx3-ubyte");
    const auto lbl_path = find_idx(data_dir, split + "-labels-idx1-ubyte");
    verify_checksum(img_path);
    verify_checksum(lbl_path);

    PsMnist ds;
    ds.images_ = read_idx_images(img_path);
    ds.labels_ = read_idx_labels(lbl_path);
    if (ds.labels_.size() != ds.images_.count) {
        throw IoError(lbl_path.string(), "label count does not match image count");
    }
    if (limit && *limit < ds.labels_.size()) {
        ds.labels_.resize(*limit);
        ds.images_.count = *limit;
        ds.images_.pixels.resize(*limit * ds.images_.rows * ds.images_.cols);
    }
    ds.permutation_ = pixel_permutation(ds.images_.rows * ds.images_.cols, permutation_seed);
    return ds;
}

std::span<const std::uint8_t> PsMnist::raw_pixels(std::size_t i) const {
    const std::size_t len = images_.rows * images_.cols;
    if (i >= size()) throw InvalidArgument("psMNIST index out of range");
    return {images_.pixels.data() + i * len, len};
}

Matrix PsMnist::sequence(std::size_t i) const {
    const auto px = raw_pixels(i);
    Matrix seq(px.size(), 1);
    for (std::size_t t = 0; t < px.size(); ++t) seq(t, 0) = static_cast<double>(px[permutation_[t]]) / 255.0;
    return seq;
}

} // namespace delaynet
