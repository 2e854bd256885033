#include <cstdlib>
#include <cstring>

#include "jmgt/errors.hpp"
#include "jmgt/kernels.hpp"

namespace jmgt::kernels {

namespace {

struct Table {
  Impl impl;
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*axpby)(double, const double*, double, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*dot3)(const double*, const double*, const double*, std::size_t);
  void (*hadamard)(const double*, const double*, double*, std::size_t);
  void (*gemv)(const double*, const double*, double*, std::size_t, std::size_t);
};

constexpr Table kScalar{Impl::scalar, scalar::axpy,     scalar::axpby, scalar::scal,
                        scalar::dot,  scalar::dot3,     scalar::hadamard,
                        scalar::gemv};

#if JMGT_KERNELS_X86
constexpr Table kAvx2{Impl::avx2, avx2::axpy,     avx2::axpby, avx2::scal,
                      avx2::dot,  avx2::dot3,     avx2::hadamard,
                      avx2::gemv};
#endif

bool avx2_available() {
#if JMGT_KERNELS_X86
  return avx2::supported();
#else
  return false;
#endif
}

const Table* resolve() {
  if (const char* env = std::getenv("JMGT_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &kScalar;
#if JMGT_KERNELS_X86
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return &kAvx2;
#endif
  }
#if JMGT_KERNELS_X86
  if (avx2_available()) return &kAvx2;
#endif
  return &kScalar;
}

const Table* g_table = resolve();

}  // namespace

Impl active() { return g_table->impl; }

const char* active_name() { return g_table->impl == Impl::avx2 ? "avx2" : "scalar"; }

void force(Impl impl) {
  if (impl == Impl::scalar) {
    g_table = &kScalar;
    return;
  }
#if JMGT_KERNELS_X86
  if (avx2_available()) {
    g_table = &kAvx2;
    return;
  }
#endif
  throw DomainError("kernels: avx2 implementation not available on this CPU");
}

void axpy(double a, const double* x, double* y, std::size_t n) { g_table->axpy(a, x, y, n); }
void axpby(double a, const double* x, double b, double* y, std::size_t n) {
  g_table->axpby(a, x, b, y, n);
}
void scal(double a, double* x, std::size_t n) { g_table->scal(a, x, n); }
double dot(const double* x, const double* y, std::size_t n) { return g_table->dot(x, y, n); }
double dot3(const double* x, const double* y, const double* w, std::size_t n) {
  return g_table->dot3(x, y, w, n);
}
void hadamard(const double* x, const double* y, double* out, std::size_t n) {
  g_table->hadamard(x, y, out, n);
}
void gemv(const double* a, const double* x, double* y, std::size_t rows, std::size_t cols) {
  g_table->gemv(a, x, y, rows, cols);
}

}  // namespace jmgt::kernels
