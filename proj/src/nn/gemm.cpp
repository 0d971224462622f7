#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "nextvit/nn_ops.hpp"

namespace nextvit {

namespace {

std::atomic<int> g_threads{1};

constexpr std::int64_t kColBlock = 512;
constexpr std::int64_t kDepthBlock = 256;
constexpr std::int64_t kMinParallelWork = 1 << 18;

// Rows [row_begin, row_end) of C. Four rows share each streamed B row.
template <typename T>
void gemm_rows(std::int64_t row_begin, std::int64_t row_end, std::int64_t n, std::int64_t k, const T* a,
               std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc) {
  for (std::int64_t i = row_begin; i < row_end; ++i) std::fill_n(c + i * ldc, n, T{0});
  for (std::int64_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::int64_t jn = std::min(kColBlock, n - j0);
    for (std::int64_t k0 = 0; k0 < k; k0 += kDepthBlock) {
      const std::int64_t kn = std::min(kDepthBlock, k - k0);
      std::int64_t i = row_begin;
      for (; i + 4 <= row_end; i += 4) {
        T* __restrict c0 = c + (i + 0) * ldc + j0;
        T* __restrict c1 = c + (i + 1) * ldc + j0;
        T* __restrict c2 = c + (i + 2) * ldc + j0;
        T* __restrict c3 = c + (i + 3) * ldc + j0;
        for (std::int64_t kk = k0; kk < k0 + kn; ++kk) {
          const T a0 = a[(i + 0) * lda + kk];
          const T a1 = a[(i + 1) * lda + kk];
          const T a2 = a[(i + 2) * lda + kk];
          const T a3 = a[(i + 3) * lda + kk];
          const T* __restrict brow = b + kk * ldb + j0;
          for (std::int64_t j = 0; j < jn; ++j) {
            const T bv = brow[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < row_end; ++i) {
        T* __restrict c0 = c + i * ldc + j0;
        for (std::int64_t kk = k0; kk < k0 + kn; ++kk) {
          const T a0 = a[i * lda + kk];
          const T* __restrict brow = b + kk * ldb + j0;
          for (std::int64_t j = 0; j < jn; ++j) c0[j] += a0 * brow[j];
        }
      }
    }
  }
}

}  // namespace

int num_threads() noexcept { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int threads) {
  if (threads < 1) fail(ErrorKind::InvalidArgument, "thread count must be >= 1");
  g_threads.store(threads, std::memory_order_relaxed);
}

namespace detail {

template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, std::int64_t lda, const T* b,
          std::int64_t ldb, T* c, std::int64_t ldc) {
  if (m == 0 || n == 0) return;
  const int threads = num_threads();
  if (threads <= 1 || m < 8 || m * n * k < kMinParallelWork) {
    gemm_rows(0, m, n, k, a, lda, b, ldb, c, ldc);
    return;
  }
  // Partition on multiples of four rows so every element sees the same code path.
  const std::int64_t quads = (m + 3) / 4;
  const std::int64_t workers = std::min<std::int64_t>(threads, quads);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  auto range = [&](std::int64_t w) {
    const std::int64_t q0 = quads * w / workers;
    const std::int64_t q1 = quads * (w + 1) / workers;
    return std::pair{std::min(m, q0 * 4), std::min(m, q1 * 4)};
  };
  for (std::int64_t w = 1; w < workers; ++w) {
    auto [r0, r1] = range(w);
    pool.emplace_back([=] { gemm_rows(r0, r1, n, k, a, lda, b, ldb, c, ldc); });
  }
  auto [r0, r1] = range(0);
  gemm_rows(r0, r1, n, k, a, lda, b, ldb, c, ldc);
  for (auto& t : pool) t.join();
}

template void gemm<float>(std::int64_t, std::int64_t, std::int64_t, const float*, std::int64_t, const float*,
                          std::int64_t, float*, std::int64_t);
template void gemm<double>(std::int64_t, std::int64_t, std::int64_t, const double*, std::int64_t,
                           const double*, std::int64_t, double*, std::int64_t);

}  // namespace detail

}  // namespace nextvit
