#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "bbphase/attribution.hpp"
#include "bbphase/config.hpp"

namespace bbphase {

/// One-sided DFT magnitude spectrum of a real waveform.
///
/// magnitudes is indexed by occurrence number k = 0..floor(N/2) and is
/// normalized by N, so magnitudes[0] == dc_value == mean(samples) and a
/// cosine of amplitude A at bin k shows up with magnitude A/2. Bin 0 is
/// never a main-spectrum candidate.
struct Spectrum {
    std::vector<double> magnitudes;
    double dc_value = 0.0;
    std::uint64_t source_length_instructions = 0;  // D of the analysed segment
    std::size_t sample_count = 0;                  // N

    double max_dynamic_magnitude() const;
};

struct MainSpectrum {
    std::size_t occurrence = 0;                  // X
    double magnitude = 0.0;
    std::uint64_t phase_length_instructions = 0;  // L = round(D / X)
};

class FlatSpectrum : public std::runtime_error {
public:
    FlatSpectrum() : std::runtime_error("spectrum is flat; no dominant repeating pattern") {}
};

// Split-complex full-length transform X[k] = sum_n x[n] exp(-2 pi i k n / N).
struct ComplexSpectrum {
    std::vector<double> re;
    std::vector<double> im;
};

/// Fast transform of a real signal of any length: iterative radix-2 for
/// powers of two, direct summation for short odd sizes, Bluestein chirp-z
/// otherwise. Unnormalized.
ComplexSpectrum fft_real(std::span<const double> x);

/// Direct O(N^2) evaluation of bins 0..bins-1.
ComplexSpectrum dft_direct(std::span<const double> x, std::size_t bins);

Spectrum dft_magnitude(const Waveform& wf);
Spectrum dft_magnitude(std::span<const double> samples, std::uint64_t source_length_instructions);

/// Argmax over k >= 1; ties (within 1e-12 relative) go to the smaller k.
/// Throws FlatSpectrum when the largest non-DC magnitude is not above
/// flat_spectrum_ratio * dc_value (or is round-off, under 1e-12 * dc_value).
MainSpectrum main_spectrum(const Spectrum& spectrum, double flat_spectrum_ratio = 0.0);

bool is_flat(const Waveform& wf, const Spectrum& spectrum, const AnalysisConfig& config);

// CSV with header occurrence,magnitude; row 0 carries the DC value.
void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum);

}  // namespace bbphase
