#pragma once

// Data-parallel inner loops used by the spectral, phase and metric code.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at startup from CPUID and
// can be forced with BBPHASE_KERNELS=scalar|avx2. All variants agree with
// the scalar reference to within floating-point reassociation error; the
// simd equivalence tests pin that tolerance.

#include <cstddef>
#include <span>
#include <string_view>

namespace bbphase::simd {

enum class Isa { Scalar, Avx2 };

struct Kernels {
    Isa isa;
    std::string_view name;

    double (*sum)(std::span<const double> x);
    void (*min_max)(std::span<const double> x, double& lo, double& hi);

    // In-place radix-2 butterfly on split-complex halves:
    //   t = w*b;  b = a - t;  a = a + t
    void (*butterfly)(std::span<double> a_re, std::span<double> a_im, std::span<double> b_re,
                      std::span<double> b_im, std::span<const double> w_re, std::span<const double> w_im);

    // out = a * b elementwise (complex); out may alias a.
    void (*complex_mul)(std::span<const double> a_re, std::span<const double> a_im, std::span<const double> b_re,
                        std::span<const double> b_im, std::span<double> out_re, std::span<double> out_im);

    // Direct DFT bin k of a real signal: sum_n x[n] * exp(-2*pi*i*k*n/N),
    // using cos/sin tables of length N = x.size().
    void (*dft_bin)(std::span<const double> x, std::span<const double> cos_table, std::span<const double> sin_table,
                    std::size_t k, double& re, double& im);

    // out[i] = scale * |re[i] + i*im[i]|
    void (*magnitudes)(std::span<const double> re, std::span<const double> im, double scale, std::span<double> out);

    // sum_i |pred[i] - golden[i]| / golden[i]
    double (*abs_rel_error_sum)(std::span<const double> pred, std::span<const double> golden);

    // Given prefix sums P (P[0] = 0, P[n] = total), writes for every split
    // t = 1..n-1 the gap |mean(x[t..n)) - mean(x[0..t))| into out[t-1].
    void (*mean_gaps)(std::span<const double> prefix, std::span<double> out);
};

const Kernels& scalar_kernels();

// nullptr when not built for x86-64 or the CPU lacks AVX2/FMA.
const Kernels* avx2_kernels();

const Kernels& active_kernels();

// Overrides the runtime choice; returns false if the ISA is unavailable.
bool select_kernels(Isa isa);

}  // namespace bbphase::simd
