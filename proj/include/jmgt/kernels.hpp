#pragma once

#include <cstddef>

// Data-parallel inner loops used by the spectral transforms and the time
// stepper. Scalar reference kernels always exist; an AVX2+FMA variant is
// selected at runtime on x86-64 when the CPU supports it. The two variants
// are equivalence-tested against each other.

#if defined(__x86_64__) || defined(_M_X64)
#define JMGT_KERNELS_X86 1
#else
#define JMGT_KERNELS_X86 0
#endif

namespace jmgt::kernels {

enum class Impl { scalar, avx2 };

// Implementation in use (resolved once; override with env JMGT_KERNELS=scalar|avx2).
Impl active();
const char* active_name();
// Test hook; throws DomainError if the requested impl is unavailable.
void force(Impl impl);

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
// y[i] = a * x[i] + b * y[i]
void axpby(double a, const double* x, double b, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
// sum_i x[i] * y[i] * w[i]
double dot3(const double* x, const double* y, const double* w, std::size_t n);
// out[i] = x[i] * y[i]
void hadamard(const double* x, const double* y, double* out, std::size_t n);
// y = A x with A row-major (rows x cols)
void gemv(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);

namespace scalar {
void axpy(double a, const double* x, double* y, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double dot3(const double* x, const double* y, const double* w, std::size_t n);
void hadamard(const double* x, const double* y, double* out, std::size_t n);
void gemv(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);
}  // namespace scalar

#if JMGT_KERNELS_X86
namespace avx2 {
bool supported();
void axpy(double a, const double* x, double* y, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double dot3(const double* x, const double* y, const double* w, std::size_t n);
void hadamard(const double* x, const double* y, double* out, std::size_t n);
void gemv(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols);
}  // namespace avx2
#endif

}  // namespace jmgt::kernels
