#include "fedpub/matrix.hpp"

#include <cmath>

namespace fedpub {

Matrix matmul_serial(const Matrix& A, const Matrix& B) {
    check_shape(A.cols == B.rows, "matmul A.cols == B.rows");
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        double* crow = &C.a[static_cast<size_t>(i) * C.cols];
        for (int k = 0; k < A.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

Matrix matmul(const Matrix& A, const Matrix& B) {
    check_shape(A.cols == B.rows, "matmul A.cols == B.rows");
    Matrix C(A.rows, B.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        double* crow = &C.a[static_cast<size_t>(i) * C.cols];
        for (int k = 0; k < A.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return C;
}

Matrix matmul_at_b(const Matrix& A, const Matrix& B) {
    check_shape(A.rows == B.rows, "matmul_at_b A.rows == B.rows");
    Matrix C(A.cols, B.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.cols; ++i) {
        double* crow = &C.a[static_cast<size_t>(i) * C.cols];
        for (int r = 0; r < A.rows; ++r) {
            const double ari = A(r, i);
            if (ari == 0.0) continue;
            const double* brow = &B.a[static_cast<size_t>(r) * B.cols];
            for (int j = 0; j < B.cols; ++j) crow[j] += ari * brow[j];
        }
    }
    return C;
}

Matrix matmul_a_bt(const Matrix& A, const Matrix& B) {
    check_shape(A.cols == B.cols, "matmul_a_bt A.cols == B.cols");
    Matrix C(A.rows, B.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        for (int j = 0; j < B.rows; ++j) {
            const double* brow = &B.a[static_cast<size_t>(j) * B.cols];
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            C(i, j) = s;
        }
    }
    return C;
}

Matrix spmm_serial(const NormalizedAdjacency& S, const Matrix& X) {
    check_shape(S.n == X.rows, "spmm S.n == X.rows");
    Matrix Y(S.n, X.cols);
    for (int i = 0; i < S.n; ++i) {
        double* yrow = &Y.a[static_cast<size_t>(i) * Y.cols];
        for (int p = S.row_ptr[i]; p < S.row_ptr[i + 1]; ++p) {
            const double w = S.val[p];
            const double* xrow = &X.a[static_cast<size_t>(S.col[p]) * X.cols];
            for (int j = 0; j < X.cols; ++j) yrow[j] += w * xrow[j];
        }
    }
    return Y;
}

Matrix spmm(const NormalizedAdjacency& S, const Matrix& X) {
    check_shape(S.n == X.rows, "spmm S.n == X.rows");
    Matrix Y(S.n, X.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < S.n; ++i) {
        double* yrow = &Y.a[static_cast<size_t>(i) * Y.cols];
        for (int p = S.row_ptr[i]; p < S.row_ptr[i + 1]; ++p) {
            const double w = S.val[p];
            const double* xrow = &X.a[static_cast<size_t>(S.col[p]) * X.cols];
            for (int j = 0; j < X.cols; ++j) yrow[j] += w * xrow[j];
        }
    }
    return Y;
}

void add_row_vector(Matrix& M, const Matrix& bias) {
    check_shape(bias.rows == 1 && bias.cols == M.cols, "bias broadcast");
    for (int i = 0; i < M.rows; ++i) {
        double* row = &M.a[static_cast<size_t>(i) * M.cols];
        for (int j = 0; j < M.cols; ++j) row[j] += bias.a[j];
    }
}

Matrix relu(const Matrix& M) {
    Matrix R(M.rows, M.cols);
    for (size_t i = 0; i < M.a.size(); ++i) R.a[i] = M.a[i] > 0.0 ? M.a[i] : 0.0;
    return R;
}

Matrix relu_backward(const Matrix& dY, const Matrix& Z) {
    check_shape(dY.same_shape(Z), "relu_backward");
    Matrix dZ(Z.rows, Z.cols);
    for (size_t i = 0; i < Z.a.size(); ++i) dZ.a[i] = Z.a[i] > 0.0 ? dY.a[i] : 0.0;
    return dZ;
}

Matrix column_sums(const Matrix& M) {
    Matrix s(1, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) s.a[j] += M(i, j);
    return s;
}

Matrix column_means(const Matrix& M) {
    Matrix s = column_sums(M);
    if (M.rows > 0)
        for (int j = 0; j < M.cols; ++j) s.a[j] /= M.rows;
    return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    check_shape(a.size() == b.size(), "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

}  // namespace fedpub
