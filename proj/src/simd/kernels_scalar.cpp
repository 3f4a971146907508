#include <cmath>

#include "bbphase/simd/kernels.hpp"

namespace bbphase::simd {

namespace {

double sum(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
}

void min_max(std::span<const double> x, double& lo, double& hi) {
    lo = x[0];
    hi = x[0];
    for (double v : x) {
        lo = std::fmin(lo, v);
        hi = std::fmax(hi, v);
    }
}

void butterfly(std::span<double> a_re, std::span<double> a_im, std::span<double> b_re, std::span<double> b_im,
               std::span<const double> w_re, std::span<const double> w_im) {
    const std::size_t n = a_re.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double tr = w_re[j] * b_re[j] - w_im[j] * b_im[j];
        const double ti = w_re[j] * b_im[j] + w_im[j] * b_re[j];
        b_re[j] = a_re[j] - tr;
        b_im[j] = a_im[j] - ti;
        a_re[j] += tr;
        a_im[j] += ti;
    }
}

void complex_mul(std::span<const double> a_re, std::span<const double> a_im, std::span<const double> b_re,
                 std::span<const double> b_im, std::span<double> out_re, std::span<double> out_im) {
    const std::size_t n = a_re.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double r = a_re[j] * b_re[j] - a_im[j] * b_im[j];
        const double i = a_re[j] * b_im[j] + a_im[j] * b_re[j];
        out_re[j] = r;
        out_im[j] = i;
    }
}

void dft_bin(std::span<const double> x, std::span<const double> cos_table, std::span<const double> sin_table,
             std::size_t k, double& re, double& im) {
    const std::size_t n = x.size();
    const std::size_t step = k % n;
    double sr = 0.0, si = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sr += x[i] * cos_table[idx];
        si -= x[i] * sin_table[idx];
        idx += step;
        if (idx >= n) idx -= n;
    }
    re = sr;
    im = si;
}

void magnitudes(std::span<const double> re, std::span<const double> im, double scale, std::span<double> out) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::sqrt(re[j] * re[j] + im[j] * im[j]) * scale;
}

double abs_rel_error_sum(std::span<const double> pred, std::span<const double> golden) {
    double s = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j) s += std::fabs(pred[j] - golden[j]) / golden[j];
    return s;
}

void mean_gaps(std::span<const double> prefix, std::span<double> out) {
    const std::size_t n = prefix.size() - 1;
    const double total = prefix[n];
    for (std::size_t t = 1; t < n; ++t) {
        const double before = prefix[t] / static_cast<double>(t);
        const double after = (total - prefix[t]) / static_cast<double>(n - t);
        out[t - 1] = std::fabs(after - before);
    }
}

constexpr Kernels kScalar{
    Isa::Scalar, "scalar", sum, min_max, butterfly, complex_mul, dft_bin, magnitudes, abs_rel_error_sum, mean_gaps,
};

}  // namespace

const Kernels& scalar_kernels() { return kScalar; }

}  // namespace bbphase::simd
