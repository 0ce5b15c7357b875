// Compiled with -mavx2 -mfma -ffp-contract=off. Only reached after a CPUID check.

#include "delaynet/kernels.hpp"

#include <algorithm>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace delaynet::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Four 0/1 bytes widened to 0.0/1.0 doubles.
inline __m256d spikes_to_pd(const std::uint8_t* s) {
    std::int32_t packed;
    __builtin_memcpy(&packed, s, sizeof packed);
    const __m128i bytes = _mm_cvtsi32_si128(packed);
    const __m128i ints = _mm_cvtepu8_epi32(bytes);
    const __m256d as_pd = _mm256_cvtepi32_pd(ints);
    return _mm256_min_pd(as_pd, _mm256_set1_pd(1.0));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_add_avx2(double a, double* y, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(prod, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] = a * y[i] + x[i];
}

void leak_integrate_avx2(double alpha, const double* u_prev, const double* current,
                         const std::uint8_t* prev_spikes, double reset, double* u,
                         std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    const __m256d vr = _mm256_set1_pd(reset);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_mul_pd(va, _mm256_loadu_pd(u_prev + i));
        v = _mm256_add_pd(v, _mm256_loadu_pd(current + i));
        v = _mm256_sub_pd(v, _mm256_mul_pd(vr, spikes_to_pd(prev_spikes + i)));
        _mm256_storeu_pd(u + i, v);
    }
    for (; i < n; ++i) {
        const double s = prev_spikes[i] ? 1.0 : 0.0;
        u[i] = (alpha * u_prev[i] + current[i]) - reset * s;
    }
}

void leak_integrate_hard_avx2(double alpha, const double* u_prev, const double* current,
                              const std::uint8_t* prev_spikes, double* u, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d keep = _mm256_sub_pd(one, spikes_to_pd(prev_spikes + i));
        __m256d v = _mm256_mul_pd(_mm256_mul_pd(va, _mm256_loadu_pd(u_prev + i)), keep);
        _mm256_storeu_pd(u + i, _mm256_add_pd(v, _mm256_loadu_pd(current + i)));
    }
    for (; i < n; ++i) {
        const double keep = prev_spikes[i] ? 0.0 : 1.0;
        u[i] = (alpha * u_prev[i]) * keep + current[i];
    }
}

std::size_t threshold_avx2(const double* u, double threshold, std::uint8_t* spikes,
                           std::size_t n) {
    const __m256d vt = _mm256_set1_pd(threshold);
    std::size_t count = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(u + i), vt, _CMP_GE_OQ));
        for (int k = 0; k < 4; ++k) spikes[i + k] = static_cast<std::uint8_t>((mask >> k) & 1);
        count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
    }
    for (; i < n; ++i) {
        spikes[i] = u[i] >= threshold ? 1 : 0;
        count += spikes[i];
    }
    return count;
}

void surrogate_avx2(const double* u, double threshold, double* out, std::size_t n) {
    const __m256d vt = _mm256_set1_pd(threshold);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_add_pd(_mm256_sub_pd(_mm256_loadu_pd(u + i), vt), one);
        // max/min operand order matches std::max(v, 0) / std::min(v, 1)
        v = _mm256_max_pd(v, zero);
        v = _mm256_min_pd(v, one);
        _mm256_storeu_pd(out + i, v);
    }
    for (; i < n; ++i) out[i] = std::min(std::max(u[i] - threshold + 1.0, 0.0), 1.0);
}

} // namespace

const KernelTable& avx2_table_impl() {
    static const KernelTable table{
        "avx2",
        dot_avx2,
        axpy_avx2,
        scale_add_avx2,
        leak_integrate_avx2,
        leak_integrate_hard_avx2,
        threshold_avx2,
        surrogate_avx2,
    };
    return table;
}

} // namespace delaynet::kernels

#endif
