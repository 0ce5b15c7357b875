#pragma once

// Minimal raster images for the plot subcommand: an RGB canvas, a few drawing
// primitives and an 8-bit truecolour PNG encoder on top of zlib.

#include "delaynet/analysis.hpp"
#include "delaynet/spike_train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace delaynet::cli {

using Rgb = std::array<std::uint8_t, 3>;

class Canvas {
public:
    Canvas(std::size_t width, std::size_t height, Rgb background = {255, 255, 255});

    std::size_t width() const noexcept { return w_; }
    std::size_t height() const noexcept { return h_; }
    void set(std::size_t x, std::size_t y, Rgb c);
    Rgb get(std::size_t x, std::size_t y) const;
    void fill_rect(std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, Rgb c);
    void line(double x0, double y0, double x1, double y1, Rgb c);

    // Throws IoError.
    void write_png(const std::filesystem::path& path) const;

private:
    std::size_t w_, h_;
    std::vector<std::uint8_t> px_;
};

// Neuron index on the vertical axis, time on the horizontal one.
Canvas render_raster(const SpikeTrain& spikes, std::size_t width = 1000, std::size_t height = 400);
// Magnitude polyline over the centred frequency axis.
Canvas render_spectrum(const Spectrum& spectrum, std::size_t width = 800, std::size_t height = 300);

} // namespace delaynet::cli
