#include <cmath>
#include <cstdint>

#include "bbphase/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define BBPHASE_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#else
#define BBPHASE_HAVE_AVX2_KERNELS 0
#endif

namespace bbphase::simd {

#if BBPHASE_HAVE_AVX2_KERNELS

#define BBPHASE_AVX2 __attribute__((target("avx2,fma")))

namespace {

BBPHASE_AVX2 double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

BBPHASE_AVX2 double sum(std::span<const double> x) {
    const double* p = x.data();
    const std::size_t n = x.size();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(p + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(p + i));
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += p[i];
    return s;
}

BBPHASE_AVX2 void min_max(std::span<const double> x, double& lo, double& hi) {
    const double* p = x.data();
    const std::size_t n = x.size();
    std::size_t i = 0;
    double l = p[0], h = p[0];
    if (n >= 4) {
        __m256d vlo = _mm256_loadu_pd(p);
        __m256d vhi = vlo;
        for (i = 4; i + 4 <= n; i += 4) {
            __m256d v = _mm256_loadu_pd(p + i);
            vlo = _mm256_min_pd(vlo, v);
            vhi = _mm256_max_pd(vhi, v);
        }
        alignas(32) double a[4], b[4];
        _mm256_store_pd(a, vlo);
        _mm256_store_pd(b, vhi);
        l = std::fmin(std::fmin(a[0], a[1]), std::fmin(a[2], a[3]));
        h = std::fmax(std::fmax(b[0], b[1]), std::fmax(b[2], b[3]));
    }
    for (; i < n; ++i) {
        l = std::fmin(l, p[i]);
        h = std::fmax(h, p[i]);
    }
    lo = l;
    hi = h;
}

BBPHASE_AVX2 void butterfly(std::span<double> a_re, std::span<double> a_im, std::span<double> b_re,
                            std::span<double> b_im, std::span<const double> w_re, std::span<const double> w_im) {
    double* ar = a_re.data();
    double* ai = a_im.data();
    double* br = b_re.data();
    double* bi = b_im.data();
    const double* wr = w_re.data();
    const double* wi = w_im.data();
    const std::size_t n = a_re.size();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d vwr = _mm256_loadu_pd(wr + j);
        __m256d vwi = _mm256_loadu_pd(wi + j);
        __m256d vbr = _mm256_loadu_pd(br + j);
        __m256d vbi = _mm256_loadu_pd(bi + j);
        __m256d tr = _mm256_fmsub_pd(vwr, vbr, _mm256_mul_pd(vwi, vbi));
        __m256d ti = _mm256_fmadd_pd(vwr, vbi, _mm256_mul_pd(vwi, vbr));
        __m256d var = _mm256_loadu_pd(ar + j);
        __m256d vai = _mm256_loadu_pd(ai + j);
        _mm256_storeu_pd(br + j, _mm256_sub_pd(var, tr));
        _mm256_storeu_pd(bi + j, _mm256_sub_pd(vai, ti));
        _mm256_storeu_pd(ar + j, _mm256_add_pd(var, tr));
        _mm256_storeu_pd(ai + j, _mm256_add_pd(vai, ti));
    }
    for (; j < n; ++j) {
        const double tr = wr[j] * br[j] - wi[j] * bi[j];
        const double ti = wr[j] * bi[j] + wi[j] * br[j];
        br[j] = ar[j] - tr;
        bi[j] = ai[j] - ti;
        ar[j] += tr;
        ai[j] += ti;
    }
}

BBPHASE_AVX2 void complex_mul(std::span<const double> a_re, std::span<const double> a_im,
                              std::span<const double> b_re, std::span<const double> b_im, std::span<double> out_re,
                              std::span<double> out_im) {
    const std::size_t n = a_re.size();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d ar = _mm256_loadu_pd(a_re.data() + j);
        __m256d ai = _mm256_loadu_pd(a_im.data() + j);
        __m256d br = _mm256_loadu_pd(b_re.data() + j);
        __m256d bi = _mm256_loadu_pd(b_im.data() + j);
        __m256d r = _mm256_fmsub_pd(ar, br, _mm256_mul_pd(ai, bi));
        __m256d i = _mm256_fmadd_pd(ar, bi, _mm256_mul_pd(ai, br));
        _mm256_storeu_pd(out_re.data() + j, r);
        _mm256_storeu_pd(out_im.data() + j, i);
    }
    for (; j < n; ++j) {
        const double r = a_re[j] * b_re[j] - a_im[j] * b_im[j];
        const double i = a_re[j] * b_im[j] + a_im[j] * b_re[j];
        out_re[j] = r;
        out_im[j] = i;
    }
}

BBPHASE_AVX2 void dft_bin(std::span<const double> x, std::span<const double> cos_table,
                          std::span<const double> sin_table, std::size_t k, double& re, double& im) {
    const std::size_t n = x.size();
    const auto nn = static_cast<long long>(n);
    const long long step = static_cast<long long>(k % n);
    const double* p = x.data();
    std::size_t i = 0;
    double sr = 0.0, si = 0.0;
    if (n >= 4) {
        // lane l walks twiddle index (k * (i + l)) mod N
        long long i0 = 0, i1 = step, i2 = (2 * step) % nn, i3 = (3 * step) % nn;
        __m256i idx = _mm256_setr_epi64x(i0, i1, i2, i3);
        const __m256i inc = _mm256_set1_epi64x((4 * step) % nn);
        const __m256i wrap = _mm256_set1_epi64x(nn);
        const __m256i limit = _mm256_set1_epi64x(nn - 1);
        __m256d acc_r = _mm256_setzero_pd();
        __m256d acc_i = _mm256_setzero_pd();
        for (; i + 4 <= n; i += 4) {
            __m256d v = _mm256_loadu_pd(p + i);
            __m256d c = _mm256_i64gather_pd(cos_table.data(), idx, 8);
            __m256d s = _mm256_i64gather_pd(sin_table.data(), idx, 8);
            acc_r = _mm256_fmadd_pd(v, c, acc_r);
            acc_i = _mm256_fmadd_pd(v, s, acc_i);
            idx = _mm256_add_epi64(idx, inc);
            __m256i over = _mm256_cmpgt_epi64(idx, limit);
            idx = _mm256_sub_epi64(idx, _mm256_and_si256(over, wrap));
        }
        sr = hsum(acc_r);
        si = -hsum(acc_i);
    }
    std::size_t idx = static_cast<std::size_t>((static_cast<unsigned long long>(step) * i) % n);
    for (; i < n; ++i) {
        sr += p[i] * cos_table[idx];
        si -= p[i] * sin_table[idx];
        idx += static_cast<std::size_t>(step);
        if (idx >= n) idx -= n;
    }
    re = sr;
    im = si;
}

BBPHASE_AVX2 void magnitudes(std::span<const double> re, std::span<const double> im, double scale,
                             std::span<double> out) {
    const std::size_t n = out.size();
    const __m256d vs = _mm256_set1_pd(scale);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d r = _mm256_loadu_pd(re.data() + j);
        __m256d i = _mm256_loadu_pd(im.data() + j);
        __m256d m2 = _mm256_fmadd_pd(r, r, _mm256_mul_pd(i, i));
        _mm256_storeu_pd(out.data() + j, _mm256_mul_pd(_mm256_sqrt_pd(m2), vs));
    }
    for (; j < n; ++j) out[j] = std::sqrt(re[j] * re[j] + im[j] * im[j]) * scale;
}

BBPHASE_AVX2 double abs_rel_error_sum(std::span<const double> pred, std::span<const double> golden) {
    const std::size_t n = pred.size();
    const __m256d sign = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d g = _mm256_loadu_pd(golden.data() + j);
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(pred.data() + j), g);
        acc = _mm256_add_pd(acc, _mm256_div_pd(_mm256_andnot_pd(sign, d), g));
    }
    double s = hsum(acc);
    for (; j < n; ++j) s += std::fabs(pred[j] - golden[j]) / golden[j];
    return s;
}

BBPHASE_AVX2 void mean_gaps(std::span<const double> prefix, std::span<double> out) {
    const std::size_t n = prefix.size() - 1;
    const double total = prefix[n];
    const double nd = static_cast<double>(n);
    const __m256d vtotal = _mm256_set1_pd(total);
    const __m256d vn = _mm256_set1_pd(nd);
    const __m256d sign = _mm256_set1_pd(-0.0);
    const __m256d four = _mm256_set1_pd(4.0);
    __m256d vt = _mm256_setr_pd(1.0, 2.0, 3.0, 4.0);
    std::size_t t = 1;
    for (; t + 4 <= n; t += 4) {
        __m256d pt = _mm256_loadu_pd(prefix.data() + t);
        __m256d before = _mm256_div_pd(pt, vt);
        __m256d after = _mm256_div_pd(_mm256_sub_pd(vtotal, pt), _mm256_sub_pd(vn, vt));
        _mm256_storeu_pd(out.data() + (t - 1), _mm256_andnot_pd(sign, _mm256_sub_pd(after, before)));
        vt = _mm256_add_pd(vt, four);
    }
    for (; t < n; ++t) {
        const double before = prefix[t] / static_cast<double>(t);
        const double after = (total - prefix[t]) / static_cast<double>(n - t);
        out[t - 1] = std::fabs(after - before);
    }
}

constexpr Kernels kAvx2{
    Isa::Avx2, "avx2", sum, min_max, butterfly, complex_mul, dft_bin, magnitudes, abs_rel_error_sum, mean_gaps,
};

}  // namespace

const Kernels* avx2_kernels() {
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &kAvx2 : nullptr;
}

#else

const Kernels* avx2_kernels() { return nullptr; }

#endif

}  // namespace bbphase::simd
