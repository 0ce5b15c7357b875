#include "plot.hpp"

#include "delaynet/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace delaynet::cli {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

constexpr std::size_t margin = 10;

} // namespace

Canvas::Canvas(std::size_t width, std::size_t height, Rgb background) : w_(width), h_(height), px_(width * height * 3) {
    if (width == 0 || height == 0) throw InvalidArgument("canvas: empty image");
    for (std::size_t i = 0; i < width * height; ++i) std::copy(background.begin(), background.end(), px_.begin() + 3 * i);
}

void Canvas::set(std::size_t x, std::size_t y, Rgb c) {
    if (x >= w_ || y >= h_) return;
    std::copy(c.begin(), c.end(), px_.begin() + 3 * (y * w_ + x));
}

Rgb Canvas::get(std::size_t x, std::size_t y) const {
    const auto* p = px_.data() + 3 * (y * w_ + x);
    return {p[0], p[1], p[2]};
}

void Canvas::fill_rect(std::size_t x0, std::size_t y0, std::size_t x1, std::size_t y1, Rgb c) {
    for (std::size_t y = y0; y < std::min(y1, h_); ++y)
        for (std::size_t x = x0; x < std::min(x1, w_); ++x) set(x, y, c);
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb c) {
    const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= steps; ++i) {
        const double f = static_cast<double>(i) / steps;
        const double x = std::round(x0 + f * (x1 - x0));
        const double y = std::round(y0 + f * (y1 - y0));
        if (x >= 0 && y >= 0) set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
    }
}

void Canvas::write_png(const std::filesystem::path& path) const {
    std::vector<std::uint8_t> raw;
    raw.reserve(h_ * (1 + 3 * w_));
    for (std::size_t y = 0; y < h_; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), px_.begin() + static_cast<std::ptrdiff_t>(3 * y * w_),
                   px_.begin() + static_cast<std::ptrdiff_t>(3 * (y + 1) * w_));
    }
    uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> packed(packed_len);
    if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw IoError(path.string(), "png compression failed");
    }
    packed.resize(packed_len);

    std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w_));
    put_u32(ihdr, static_cast<std::uint32_t>(h_));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", packed);
    put_chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!out) throw IoError(path.string(), "write failed");
}

Canvas render_raster(const SpikeTrain& spikes, std::size_t width, std::size_t height) {
    Canvas c(width, height);
    const std::size_t pw = width - 2 * margin;
    const std::size_t ph = height - 2 * margin;
    c.fill_rect(margin, margin, width - margin, height - margin, {248, 248, 248});
    if (spikes.steps == 0 || spikes.channels == 0) return c;
    for (std::size_t t = 0; t < spikes.steps; ++t) {
        const auto row = spikes.row(t);
        const std::size_t x = margin + t * pw / spikes.steps;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (!row[j]) continue;
            const std::size_t y0 = margin + j * ph / spikes.channels;
            const std::size_t y1 = std::max(y0 + 1, margin + (j + 1) * ph / spikes.channels);
            c.fill_rect(x, y0, x + 1, y1, {20, 20, 20});
        }
    }
    return c;
}

Canvas render_spectrum(const Spectrum& spectrum, std::size_t width, std::size_t height) {
    Canvas c(width, height);
    const double pw = static_cast<double>(width - 2 * margin);
    const double ph = static_cast<double>(height - 2 * margin);
    const std::size_t n = spectrum.magnitudes.size();
    const double base = static_cast<double>(height - margin);
    c.line(static_cast<double>(margin), base, static_cast<double>(width - margin), base, {120, 120, 120});
    c.line(margin + pw / 2, static_cast<double>(margin), margin + pw / 2, base, {200, 200, 200});
    if (n < 2) return c;
    const double peak = *std::max_element(spectrum.magnitudes.begin(), spectrum.magnitudes.end());
    const double scale = peak > 0.0 ? ph / peak : 0.0;
    auto at = [&](std::size_t i) {
        return std::pair{margin + pw * static_cast<double>(i) / static_cast<double>(n - 1),
                         base - scale * spectrum.magnitudes[i]};
    };
    for (std::size_t i = 1; i < n; ++i) {
        const auto [x0, y0] = at(i - 1);
        const auto [x1, y1] = at(i);
        c.line(x0, y0, x1, y1, {31, 90, 180});
    }
    return c;
}

} // namespace delaynet::cli
