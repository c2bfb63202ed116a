#pragma once

// Dense loops shared by the ops. All matrices are row-major. Loop orders keep
// the innermost loop a contiguous axpy so the compiler can vectorize it
// without reassociating sums.

#include <cstddef>
#include <vector>

namespace tbscreen::kernels {

/// c[M,N] += a[M,K] * b[K,N]
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                    const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// c[M,N] += a[K,M]^T * b[K,N]
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
                    const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// out[C,R] = in[R,C]^T
inline void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

/// c[M,N] += a[M,K] * b[N,K]^T
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
                    const double* b, double* c) {
  std::vector<double> bt(k * n);
  transpose(n, k, b, bt.data());
  gemm_nn(m, k, n, a, bt.data(), c);
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, out_h, out_w;
  std::size_t patch_len() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

/// Unfolds every k×k window into a column: cols[C*k*k, out_h*out_w].
inline void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const double* src = in + (c * g.height + oy * g.stride + ky) * g.width + kx;
          double* dst = row + oy * g.out_w;
          if (g.stride == 1) {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = src[ox];
          } else {
            for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = src[ox * g.stride];
          }
        }
      }
}

/// Adjoint of im2col: scatters columns back into the image, summing overlaps.
inline void col2im(const ConvGeometry& g, const double* cols, double* out) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          double* dst = out + (c * g.height + oy * g.stride + ky) * g.width + kx;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
}

}  // namespace tbscreen::kernels
