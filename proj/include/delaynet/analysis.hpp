#pragma once

#include "delaynet/matrix.hpp"
#include "delaynet/network.hpp"
#include "delaynet/spike_train.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

namespace delaynet {

enum class SpectrumWindow { rectangular, hann };

struct SpectrumOptions {
    SpectrumWindow window = SpectrumWindow::rectangular;
    // Restrict to ticks [begin, end); whole train when unset.
    std::optional<TimeWindow> range;
};

// Zero-centred spectrum of the population rate: frequencies_hz ascending from
// -fs/2, magnitudes |X(f)| of the mean-subtracted total spike count.
struct Spectrum {
    std::vector<double> frequencies_hz;
    std::vector<double> magnitudes;
};

Spectrum spike_rate_spectrum(const SpikeTrain& spikes, double dt_ms, const SpectrumOptions& opts = {});

// Same, for an arbitrary real signal sampled every dt_ms.
Spectrum signal_spectrum(std::span<const double> signal, double dt_ms, SpectrumWindow window);

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);

class SpectralRadiusNotConverged : public std::runtime_error {
public:
    SpectralRadiusNotConverged(double last_estimate, std::size_t iterations);
    double last_estimate() const noexcept { return last_estimate_; }

private:
    double last_estimate_;
};

struct SpectralRadiusOptions {
    double rel_tol = 1e-8;
    std::size_t max_iterations = 10000;
    // Power sweeps without convergence before switching to QR deflation.
    std::size_t stagnation_window = 500;
};

// Largest eigenvalue modulus of a square real matrix by power iteration.
// Each sweep fits x_{k+2} = c1 x_{k+1} + c0 x_k in least squares, so a
// dominant complex-conjugate (or +/- real) pair is resolved from the roots of
// z^2 - c1 z - c0 without complex arithmetic; a single dominant real
// eigenvalue is taken from the Rayleigh quotient. When several eigenvalues
// share nearly the same modulus the iteration stagnates; it then falls back to
// Hessenberg reduction and shifted QR deflation of the whole spectrum.
double spectral_radius(const Matrix& w, const SpectralRadiusOptions& opts = {});

} // namespace delaynet
