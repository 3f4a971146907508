#include "bbphase/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <ostream>

#include "bbphase/simd/kernels.hpp"
#include "numfmt.hpp"

namespace bbphase {

namespace {

constexpr std::size_t kDirectLimit = 64;

void bit_reverse(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
}

// In-place forward radix-2 transform; size must be a power of two.
void fft_pow2(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (n < 2) return;
    const auto& k = simd::active_kernels();
    bit_reverse(re, im);

    std::vector<double> cos_t(n / 2), sin_t(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        cos_t[j] = std::cos(angle);
        sin_t[j] = std::sin(angle);
    }
    std::vector<double> wr(n / 2), wi(n / 2);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t j = 0; j < half; ++j) {
            wr[j] = cos_t[j * step];
            wi[j] = sin_t[j * step];
        }
        const std::span<const double> w_re(wr.data(), half), w_im(wi.data(), half);
        for (std::size_t i = 0; i < n; i += len) {
            k.butterfly(std::span(re.data() + i, half), std::span(im.data() + i, half),
                        std::span(re.data() + i + half, half), std::span(im.data() + i + half, half), w_re, w_im);
        }
    }
}

ComplexSpectrum bluestein(std::span<const double> x) {
    const std::size_t n = x.size();
    const std::size_t m = std::bit_ceil(2 * n - 1);
    const auto& k = simd::active_kernels();

    // chirp[j] = exp(-i pi j^2 / n); j^2 reduced mod 2n keeps the angle exact
    std::vector<double> chirp_re(n), chirp_im(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<std::uint64_t>(j) * j % (2 * static_cast<std::uint64_t>(n));
        const double angle = -std::numbers::pi * static_cast<double>(jj) / static_cast<double>(n);
        chirp_re[j] = std::cos(angle);
        chirp_im[j] = std::sin(angle);
    }

    std::vector<double> a_re(m, 0.0), a_im(m, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        a_re[j] = x[j] * chirp_re[j];
        a_im[j] = x[j] * chirp_im[j];
    }
    std::vector<double> b_re(m, 0.0), b_im(m, 0.0);
    b_re[0] = chirp_re[0];
    b_im[0] = -chirp_im[0];
    for (std::size_t j = 1; j < n; ++j) {
        b_re[j] = b_re[m - j] = chirp_re[j];
        b_im[j] = b_im[m - j] = -chirp_im[j];
    }

    fft_pow2(a_re, a_im);
    fft_pow2(b_re, b_im);
    k.complex_mul(a_re, a_im, b_re, b_im, a_re, a_im);
    // inverse via conjugation
    for (auto& v : a_im) v = -v;
    fft_pow2(a_re, a_im);
    const double inv_m = 1.0 / static_cast<double>(m);

    ComplexSpectrum out;
    out.re.resize(n);
    out.im.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double cr = a_re[j] * inv_m;
        const double ci = -a_im[j] * inv_m;
        out.re[j] = cr * chirp_re[j] - ci * chirp_im[j];
        out.im[j] = cr * chirp_im[j] + ci * chirp_re[j];
    }
    return out;
}

}  // namespace

ComplexSpectrum dft_direct(std::span<const double> x, std::size_t bins) {
    const std::size_t n = x.size();
    std::vector<double> cos_t(n), sin_t(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        cos_t[j] = std::cos(angle);
        sin_t[j] = std::sin(angle);
    }
    const auto& k = simd::active_kernels();
    ComplexSpectrum out;
    out.re.resize(bins);
    out.im.resize(bins);
    for (std::size_t b = 0; b < bins; ++b) k.dft_bin(x, cos_t, sin_t, b, out.re[b], out.im[b]);
    return out;
}

ComplexSpectrum fft_real(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (std::has_single_bit(n)) {
        ComplexSpectrum out{std::vector<double>(x.begin(), x.end()), std::vector<double>(n, 0.0)};
        fft_pow2(out.re, out.im);
        return out;
    }
    if (n <= kDirectLimit) return dft_direct(x, n);
    return bluestein(x);
}

double Spectrum::max_dynamic_magnitude() const {
    if (magnitudes.size() < 2) return 0.0;
    return *std::max_element(magnitudes.begin() + 1, magnitudes.end());
}

Spectrum dft_magnitude(const Waveform& wf) { return dft_magnitude(wf.samples, wf.length_instructions); }

Spectrum dft_magnitude(std::span<const double> samples, std::uint64_t source_length_instructions) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("spectrum needs at least two samples");
    const std::size_t bins = n / 2 + 1;
    ComplexSpectrum c = std::has_single_bit(n) || n > kDirectLimit ? fft_real(samples) : dft_direct(samples, bins);

    Spectrum s;
    s.magnitudes.resize(bins);
    simd::active_kernels().magnitudes(std::span(c.re.data(), bins), std::span(c.im.data(), bins),
                                      1.0 / static_cast<double>(n), s.magnitudes);
    s.dc_value = s.magnitudes[0];
    s.source_length_instructions = source_length_instructions;
    s.sample_count = n;
    return s;
}

constexpr double kRoundoffRatio = 1e-12;

MainSpectrum main_spectrum(const Spectrum& spectrum, double flat_spectrum_ratio) {
    const auto& m = spectrum.magnitudes;
    if (m.size() < 2) throw FlatSpectrum();
    std::size_t best = 1;
    for (std::size_t k = 2; k < m.size(); ++k) {
        if (m[k] > m[best] * (1.0 + 1e-12)) best = k;
    }
    // Transform round-off leaves ~1e-16 * dc in the bins of a constant signal.
    const double floor = std::max(flat_spectrum_ratio, kRoundoffRatio) * std::fabs(spectrum.dc_value);
    if (!(m[best] > 0.0) || m[best] <= floor) throw FlatSpectrum();

    MainSpectrum main;
    main.occurrence = best;
    main.magnitude = m[best];
    const double length = std::round(static_cast<double>(spectrum.source_length_instructions) / static_cast<double>(best));
    main.phase_length_instructions = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(length));
    return main;
}

bool is_flat(const Waveform& wf, const Spectrum& spectrum, const AnalysisConfig& config) {
    double lo = 0.0, hi = 0.0;
    simd::active_kernels().min_max(wf.samples, lo, hi);
    if (hi - lo <= config.flat_cpi_range) return true;
    return spectrum.max_dynamic_magnitude() <= config.flat_spectrum_ratio * spectrum.dc_value;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& spectrum) {
    out << "occurrence,magnitude\n";
    out << "0," << detail::format_double(spectrum.dc_value) << '\n';
    for (std::size_t k = 1; k < spectrum.magnitudes.size(); ++k)
        out << k << ',' << detail::format_double(spectrum.magnitudes[k]) << '\n';
}

}  // namespace bbphase
