#include "delaynet/topology.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace delaynet {

std::size_t DelaySchedule::max_steps() const noexcept {
    return delay_steps.empty() ? 0 : *std::max_element(delay_steps.begin(), delay_steps.end());
}

DelaySchedule DelaySchedule::uniform(std::size_t n, double delay_ms, double dt_ms) {
    return from_ms(std::vector<double>(n, delay_ms), dt_ms);
}

DelaySchedule DelaySchedule::from_ms(std::vector<double> delay_ms, double dt_ms) {
    DelaySchedule s;
    s.dt_ms = dt_ms;
    s.delay_steps.reserve(delay_ms.size());
    for (double d : delay_ms) s.delay_steps.push_back(delay_to_steps(d, dt_ms));
    s.delay_ms = std::move(delay_ms);
    return s;
}

DelaySchedule DelaySchedule::from_steps(std::vector<std::size_t> steps, double dt_ms) {
    if (!(dt_ms > 0.0)) throw InvalidArgument("delay schedule: dt must be positive");
    DelaySchedule s;
    s.dt_ms = dt_ms;
    s.delay_ms.reserve(steps.size());
    for (std::size_t k : steps) s.delay_ms.push_back(static_cast<double>(k) * dt_ms);
    s.delay_steps = std::move(steps);
    return s;
}

std::size_t delay_to_steps(double delay_ms, double dt_ms) {
    if (!(dt_ms > 0.0)) throw InvalidArgument("delay_to_steps: dt must be positive");
    if (!(delay_ms >= 0.0) || !std::isfinite(delay_ms)) {
        throw InvalidArgument("delay_to_steps: delay must be finite and non-negative");
    }
    return static_cast<std::size_t>(std::round(delay_ms / dt_ms));
}

std::size_t lattice_side_for(std::size_t n) {
    auto side = static_cast<std::size_t>(std::cbrt(static_cast<double>(n)));
    while (side * side * side < n) ++side;
    while (side > 0 && (side - 1) * (side - 1) * (side - 1) >= n) --side;
    return side;
}

NeuronPositions place_neurons(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("place_neurons: need at least one neuron");
    NeuronPositions pos;
    pos.lattice_side = lattice_side_for(n);
    pos.coords.reserve(n);
    Rng rng(seed);
    const std::size_t s = pos.lattice_side;
    for (std::size_t k = 0; k < n; ++k) {
        const std::array<std::size_t, 3> site{k / (s * s), (k / s) % s, k % s};
        std::array<double, 3> c{};
        for (int d = 0; d < 3; ++d) c[d] = static_cast<double>(site[d]) + uniform(rng, 0.0, 0.5);
        pos.coords.push_back(c);
    }
    return pos;
}

namespace {

void check_band_args(std::span<const double> edges, std::span<const double> delays_ms) {
    if (delays_ms.empty()) throw InvalidArgument("delay assignment: empty delay set");
    if (edges.size() + 1 != delays_ms.size()) {
        throw InvalidArgument("delay assignment: need exactly one fewer radius edge than delays");
    }
    for (std::size_t k = 1; k < edges.size(); ++k) {
        if (!(edges[k] > edges[k - 1])) throw InvalidArgument("delay assignment: radius edges must increase");
    }
}

} // namespace

DelaySchedule assign_delays_by_radius(const NeuronPositions& pos,
                                      std::span<const double> radius_fracs,
                                      std::span<const double> delays_ms, double dt_ms,
                                      RadiusNorm norm) {
    if (pos.coords.empty()) throw InvalidArgument("assign_delays_by_radius: no positions");
    check_band_args(radius_fracs, delays_ms);

    std::array<double, 3> centroid{};
    for (const auto& c : pos.coords)
        for (int d = 0; d < 3; ++d) centroid[d] += c[d];
    for (double& v : centroid) v /= static_cast<double>(pos.coords.size());

    std::vector<double> dist;
    dist.reserve(pos.coords.size());
    for (const auto& c : pos.coords) {
        const double dx = c[0] - centroid[0], dy = c[1] - centroid[1], dz = c[2] - centroid[2];
        dist.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    }

    double radius = 0.0;
    if (norm == RadiusNorm::lattice_diagonal) {
        radius = static_cast<double>(pos.lattice_side) * std::sqrt(3.0);
    } else {
        radius = *std::max_element(dist.begin(), dist.end());
    }

    std::vector<double> assigned;
    assigned.reserve(dist.size());
    for (double d : dist) {
        const double frac = radius > 0.0 ? d / radius : 0.0;
        std::size_t band = radius_fracs.size();
        for (std::size_t k = 0; k < radius_fracs.size(); ++k) {
            if (frac <= radius_fracs[k]) {
                band = k;
                break;
            }
        }
        assigned.push_back(delays_ms[band]);
    }
    return DelaySchedule::from_ms(std::move(assigned), dt_ms);
}

DelaySchedule assign_delays_by_fraction(std::size_t n, std::span<const double> fracs,
                                        std::span<const double> delays_ms, double dt_ms,
                                        std::uint64_t seed) {
    if (fracs.size() != delays_ms.size() || fracs.empty()) {
        throw InvalidArgument("assign_delays_by_fraction: one fraction per delay required");
    }
    if (std::any_of(fracs.begin(), fracs.end(), [](double f) { return !(f >= 0.0); })) {
        throw InvalidArgument("assign_delays_by_fraction: fractions must be non-negative");
    }
    const double total = std::accumulate(fracs.begin(), fracs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("assign_delays_by_fraction: fractions must sum to 1");

    std::vector<double> assigned;
    assigned.reserve(n);
    for (std::size_t k = 0; k + 1 < fracs.size(); ++k) {
        const auto count = static_cast<std::size_t>(std::floor(fracs[k] * static_cast<double>(n)));
        for (std::size_t i = 0; i < count && assigned.size() < n; ++i) assigned.push_back(delays_ms[k]);
    }
    while (assigned.size() < n) assigned.push_back(delays_ms.back());

    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_int(rng, 0, i - 1);
        std::swap(assigned[i - 1], assigned[j]);
    }
    return DelaySchedule::from_ms(std::move(assigned), dt_ms);
}

void write_delay_schedule_json(std::ostream& out, const DelaySchedule& schedule) {
    nlohmann::json j;
    j["dt_ms"] = schedule.dt_ms;
    j["delays_ms"] = schedule.delay_ms;
    j["delay_steps"] = schedule.delay_steps;
    out << j.dump(2) << '\n';
}

DelaySchedule read_delay_schedule_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("delay schedule JSON: ") + e.what());
    }
    DelaySchedule s;
    s.dt_ms = j.at("dt_ms").get<double>();
    s.delay_ms = j.at("delays_ms").get<std::vector<double>>();
    s.delay_steps = j.at("delay_steps").get<std::vector<std::size_t>>();
    if (s.delay_ms.size() != s.delay_steps.size()) throw InvalidArgument("delay schedule JSON: length mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (delay_to_steps(s.delay_ms[i], s.dt_ms) != s.delay_steps[i]) {
            throw InvalidArgument("delay schedule JSON: delay_steps inconsistent with delays_ms");
        }
    }
    return s;
}

void write_positions_csv(std::ostream& out, const NeuronPositions& pos, const DelaySchedule& schedule) {
    if (schedule.size() != pos.size()) throw InvalidArgument("positions/delays length mismatch");
    out << "x,y,z,delay_ms\n";
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto& c = pos.coords[i];
        out << c[0] << ',' << c[1] << ',' << c[2] << ',' << schedule.delay_ms[i] << '\n';
    }
}

} // namespace delaynet
