#include <cblas.h>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

// Row-major GEMM: C = alpha * op(A) @ op(B) + beta * C.
inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
                 int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m * n));
    gemm(false, false, m, n, k, T(1), a.ptr(), k, b.ptr(), n, T(0), out.data(), n);
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(Shape{m, n}, std::move(out), {a, b}, [ai, bi, m, n, k](TensorImpl<T>& self) {
        const T* g = self.grad.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            // dA = dC @ B^T
            gemm(false, true, m, k, n, T(1), g, n, bi->data.data(), n, T(1), ai->grad.data(), k);
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            // dB = A^T @ dC
            gemm(true, false, k, n, m, T(1), ai->data.data(), k, g, n, T(1), bi->grad.data(), n);
        }
    });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<T> out(static_cast<size_t>(batch * m * n));
    for (int64_t i = 0; i < batch; ++i) {
        gemm(false, false, m, n, k, T(1), a.ptr() + i * m * k, k, b.ptr() + i * k * n, n, T(0),
             out.data() + i * m * n, n);
    }
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(Shape{batch, m, n}, std::move(out), {a, b},
                          [ai, bi, batch, m, n, k](TensorImpl<T>& self) {
                              const T* g = self.grad.data();
                              if (ai->requires_grad) {
                                  ai->ensure_grad();
                                  for (int64_t i = 0; i < batch; ++i)
                                      gemm(false, true, m, k, n, T(1), g + i * m * n, n,
                                           bi->data.data() + i * k * n, n, T(1),
                                           ai->grad.data() + i * m * k, k);
                              }
                              if (bi->requires_grad) {
                                  bi->ensure_grad();
                                  for (int64_t i = 0; i < batch; ++i)
                                      gemm(true, false, k, n, m, T(1), ai->data.data() + i * m * k, k,
                                           g + i * m * n, n, T(1), bi->grad.data() + i * k * n, n);
                              }
                          });
}

template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> bmm(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bmm(const Tensor<double>&, const Tensor<double>&);

}  // namespace vseg
