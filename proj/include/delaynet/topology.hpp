#pragma once

// Spatial placement of hidden neurons and per-neuron transmission delays.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace delaynet {

struct NeuronPositions {
    std::vector<std::array<double, 3>> coords;
    std::size_t lattice_side = 0;

    std::size_t size() const noexcept { return coords.size(); }
};

// Immutable once built. delay_steps[i] = round(delay_ms[i] / dt_ms).
struct DelaySchedule {
    double dt_ms = 1.0;
    std::vector<double> delay_ms;
    std::vector<std::size_t> delay_steps;

    std::size_t size() const noexcept { return delay_steps.size(); }
    std::size_t max_steps() const noexcept;

    static DelaySchedule uniform(std::size_t n, double delay_ms, double dt_ms);
    static DelaySchedule from_ms(std::vector<double> delay_ms, double dt_ms);
    static DelaySchedule from_steps(std::vector<std::size_t> steps, double dt_ms);

    bool operator==(const DelaySchedule&) const = default;
};

// Milliseconds to whole ticks, nearest with ties away from zero.
std::size_t delay_to_steps(double delay_ms, double dt_ms);

// Smallest side s with s^3 >= n.
std::size_t lattice_side_for(std::size_t n);

// Fills a cubic lattice in row-major (x slowest) order and adds U[0, 0.5)
// noise to every coordinate.
NeuronPositions place_neurons(std::size_t n, std::uint64_t seed);

enum class RadiusNorm {
    // Centroid distance divided by the lattice cube diagonal, side * sqrt(3).
    lattice_diagonal,
    // Centroid distance divided by the largest centroid distance.
    max_centroid_distance,
};

// Band k holds neurons whose normalised centroid distance is <= radius_fracs[k]
// (and above the previous edge); everything past the last edge lands in the
// final band. radius_fracs must be strictly increasing with one entry fewer
// than delays_ms.
DelaySchedule assign_delays_by_radius(const NeuronPositions& pos,
                                      std::span<const double> radius_fracs,
                                      std::span<const double> delays_ms, double dt_ms,
                                      RadiusNorm norm = RadiusNorm::lattice_diagonal);

// floor(f_k * n) neurons per band, remainder to the last band, then a seeded
// shuffle of which neuron gets which band.
DelaySchedule assign_delays_by_fraction(std::size_t n, std::span<const double> fracs,
                                        std::span<const double> delays_ms, double dt_ms,
                                        std::uint64_t seed);

// {"dt_ms": .., "delays_ms": [..], "delay_steps": [..]}
void write_delay_schedule_json(std::ostream& out, const DelaySchedule& schedule);
DelaySchedule read_delay_schedule_json(std::istream& in);

// x,y,z,delay_ms
void write_positions_csv(std::ostream& out, const NeuronPositions& pos, const DelaySchedule& schedule);

} // namespace delaynet
