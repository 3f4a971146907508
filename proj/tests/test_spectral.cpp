#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "bbphase/spectral.hpp"
#include "bbphase/synth.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace bbphase;

namespace {

Spectrum from_magnitudes(std::vector<double> m, std::uint64_t d) {
    Spectrum s;
    s.dc_value = m[0];
    s.sample_count = 2 * (m.size() - 1);
    s.source_length_instructions = d;
    s.magnitudes = std::move(m);
    return s;
}

}  // namespace

TEST_CASE("constant signal has only a DC term") {
    for (std::size_t n : {2u, 7u, 64u, 100u, 1000u}) {
        std::vector<double> x(n, 2.75);
        auto s = dft_magnitude(x, n);
        CHECK(s.dc_value == doctest::Approx(2.75));
        CHECK(s.magnitudes[0] == s.dc_value);
        for (std::size_t k = 1; k < s.magnitudes.size(); ++k) CHECK(s.magnitudes[k] < 1e-12);
        CHECK_THROWS_AS(main_spectrum(s), FlatSpectrum);
    }
}

TEST_CASE("pure cosine at bin four") {
    std::vector<double> x(64);
    for (std::size_t n = 0; n < 64; ++n) x[n] = std::cos(2.0 * std::numbers::pi * 4.0 * n / 64.0);
    auto s = dft_magnitude(x, 64);
    CHECK(std::fabs(s.magnitudes[4] - 0.5) < 1e-9);
    for (std::size_t k = 1; k < s.magnitudes.size(); ++k)
        if (k != 4) CHECK(s.magnitudes[k] < 0.5 - 1e-6);
    CHECK(main_spectrum(s).occurrence == 4);
}

TEST_CASE("fast transform matches the naive oracle") {
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<std::size_t> len(2, 1024);
    std::uniform_real_distribution<double> val(0.2, 4.0);
    std::vector<std::size_t> sizes{2, 3, 16, 31, 64, 65, 127, 128, 1000, 1024};
    for (int i = 0; i < 30; ++i) sizes.push_back(len(rng));
    for (std::size_t n : sizes) {
        CAPTURE(n);
        std::vector<double> x(n);
        for (auto& v : x) v = val(rng);
        auto want = oracle::naive_dft(x);
        auto got = fft_real(x);
        REQUIRE(got.re.size() == n);
        double worst = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            worst = std::max(worst, std::abs(std::complex<double>(got.re[k], got.im[k]) - want[k]) / n);
        CHECK(worst < 1e-9);
        auto mags = dft_magnitude(x, n).magnitudes;
        auto want_mags = oracle::naive_dft_magnitudes(x);
        for (std::size_t k = 0; k < mags.size(); ++k) CHECK(std::fabs(mags[k] - want_mags[k]) < 1e-9);
    }
}

TEST_CASE("direct transform computes the requested bins") {
    std::vector<double> x{1.0, 2.0, 0.5, 3.0, 1.5};
    auto d = dft_direct(x, 3);
    auto want = oracle::naive_dft(x);
    REQUIRE(d.re.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(d.re[k] == doctest::Approx(want[k].real()));
        CHECK(d.im[k] == doctest::Approx(want[k].imag()));
    }
}

TEST_CASE("phase length from the main spectrum") {
    std::vector<double> m(11, 0.0);
    m[0] = 1.5;
    m[4] = 0.6;
    m[2] = 0.1;
    CHECK(main_spectrum(from_magnitudes(m, 4500)).phase_length_instructions == 1125);

    std::vector<double> f(101, 0.0);
    f[0] = 1.1;
    f[40] = 0.2;
    auto ms = main_spectrum(from_magnitudes(f, 400));
    CHECK(ms.occurrence == 40);
    CHECK(ms.phase_length_instructions == 10);
    CHECK(ms.magnitude == 0.2);
}

TEST_CASE("ties go to the smaller occurrence") {
    std::vector<double> m(9, 0.0);
    m[0] = 1.0;
    m[3] = 0.25;
    m[6] = 0.25;
    CHECK(main_spectrum(from_magnitudes(m, 160)).occurrence == 3);
}

TEST_CASE("phase length rounds D / X") {
    std::vector<double> m(9, 0.0);
    m[0] = 1.0;
    m[3] = 0.25;
    CHECK(main_spectrum(from_magnitudes(m, 100)).phase_length_instructions == 33);
    CHECK(main_spectrum(from_magnitudes(m, 101)).phase_length_instructions == 34);
}

TEST_CASE("flatness ratio throws") {
    std::vector<double> m(5, 0.0);
    m[0] = 1.0;
    m[2] = 0.01;
    CHECK_NOTHROW(main_spectrum(from_magnitudes(m, 8)));
    CHECK_THROWS_AS(main_spectrum(from_magnitudes(m, 8), 0.02), FlatSpectrum);
}

TEST_CASE("square-trace spectra") {
    auto g = generate(scenarios::square_4500());
    auto wf = build_waveform(g.trace, attribute_block_cpi(g.trace), 4096);
    auto s = dft_magnitude(wf);
    CHECK(s.source_length_instructions == 4500);
    auto ms = main_spectrum(s);
    CHECK(ms.occurrence == 4);
    CHECK(ms.phase_length_instructions == 1125);
    CHECK_FALSE(is_flat(wf, s, AnalysisConfig{}));

    auto f = generate(scenarios::fine_400());
    auto fw = build_waveform(f.trace, attribute_block_cpi(f.trace), 4096);
    auto fs = dft_magnitude(fw);
    auto fm = main_spectrum(fs);
    CHECK(fm.occurrence == 40);
    CHECK(fm.phase_length_instructions == 10);
    CHECK(is_flat(fw, fs, AnalysisConfig{}));
}

TEST_CASE("flatness tests") {
    AnalysisConfig cfg;
    Waveform c;
    c.samples.assign(32, 1.7);
    c.length_instructions = 32;
    CHECK(is_flat(c, dft_magnitude(c), cfg));

    Waveform sq;
    sq.length_instructions = 64;
    for (int i = 0; i < 64; ++i) sq.samples.push_back((i / 8) % 2 ? 2.0 : 1.0);
    CHECK_FALSE(is_flat(sq, dft_magnitude(sq), cfg));

    Waveform small;
    small.length_instructions = 64;
    for (int i = 0; i < 64; ++i) small.samples.push_back((i / 8) % 2 ? 1.25 : 1.0);
    CHECK(is_flat(small, dft_magnitude(small), cfg));
}

TEST_CASE("spectrum csv") {
    std::ostringstream out;
    write_spectrum_csv(out, dft_magnitude(std::vector<double>{1.0, 3.0, 1.0, 3.0}, 4));
    CHECK(out.str() == "occurrence,magnitude\n0,2\n1,0\n2,1\n");
}

TEST_CASE("dc equals the sample mean, rotation and scaling properties") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> val(0.5, 3.0);
    for (std::size_t n : {16u, 45u, 100u, 256u, 999u}) {
        std::vector<double> x(n);
        for (auto& v : x) v = val(rng);
        const auto s = dft_magnitude(x, n);
        double mean = 0.0;
        for (double v : x) mean += v;
        CHECK(std::fabs(s.dc_value - mean / n) < 1e-9);

        std::vector<double> rot(x);
        std::rotate(rot.begin(), rot.begin() + n / 3, rot.end());
        const auto r = dft_magnitude(rot, n);
        for (std::size_t k = 0; k < s.magnitudes.size(); ++k) CHECK(std::fabs(r.magnitudes[k] - s.magnitudes[k]) < 1e-9);
        CHECK(main_spectrum(r).occurrence == main_spectrum(s).occurrence);

        for (double a : {0.5, 2.0, 4.0}) {
            std::vector<double> y(x);
            for (auto& v : y) v *= a;
            const auto t = dft_magnitude(y, n);
            for (std::size_t k = 0; k < s.magnitudes.size(); ++k)
                CHECK(std::fabs(t.magnitudes[k] - a * s.magnitudes[k]) < 1e-9);
            CHECK(main_spectrum(t).occurrence == main_spectrum(s).occurrence);
        }
    }
}

TEST_CASE("square waves report N / P occurrences") {
    for (std::size_t n : {64u, 120u, 1000u, 4096u}) {
        for (std::size_t p = 4; p <= n / 2; p *= 2) {
            if (n % p) continue;
            std::vector<double> x(n);
            for (std::size_t i = 0; i < n; ++i) x[i] = (i % p) < p / 2 ? 1.0 : 2.0;
            CAPTURE(n);
            CAPTURE(p);
            CHECK(main_spectrum(dft_magnitude(x, n)).occurrence == n / p);
            if (n <= 1000) {
                auto want = oracle::naive_dft_magnitudes(x);
                std::size_t best = 1;
                for (std::size_t k = 2; k < want.size(); ++k)
                    if (want[k] > want[best] * (1.0 + 1e-12)) best = k;
                CHECK(best == n / p);
            }
        }
    }
}
