#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace delaynet {

// Binary activity, time-major: bits[t * channels + c].
struct SpikeTrain {
    std::size_t steps = 0;
    std::size_t channels = 0;
    double dt_ms = 1.0;
    std::vector<std::uint8_t> bits;

    SpikeTrain() = default;
    SpikeTrain(std::size_t steps_, std::size_t channels_, double dt)
        : steps(steps_), channels(channels_), dt_ms(dt), bits(steps_ * channels_, 0) {}

    std::span<std::uint8_t> row(std::size_t t) noexcept { return {bits.data() + t * channels, channels}; }
    std::span<const std::uint8_t> row(std::size_t t) const noexcept {
        return {bits.data() + t * channels, channels};
    }
    std::uint8_t& at(std::size_t t, std::size_t c) noexcept { return bits[t * channels + c]; }
    std::uint8_t at(std::size_t t, std::size_t c) const noexcept { return bits[t * channels + c]; }

    std::size_t count() const noexcept {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }

    bool operator==(const SpikeTrain&) const = default;
};

} // namespace delaynet
