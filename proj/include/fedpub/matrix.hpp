#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedpub {

/// Dense row-major matrix of doubles. All model tensors, feature matrices
/// and similarity matrices use this type; vectors are 1xN matrices.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return a.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

/// Symmetric normalized adjacency with self-loops, stored as CSR.
/// Entries are 1/sqrt(d~(u) d~(v)) with d~ the degree of A+I.
struct NormalizedAdjacency {
    int n = 0;
    std::vector<int> row_ptr;  // size n+1
    std::vector<int> col;
    std::vector<double> val;
};

// Dense kernels. The _serial variants are the reference implementations;
// the unsuffixed ones are OpenMP-parallel over output rows and produce
// bit-identical results (each output element is a serial dot product).
Matrix matmul_serial(const Matrix& A, const Matrix& B);
Matrix matmul(const Matrix& A, const Matrix& B);

// C = A^T * B
Matrix matmul_at_b(const Matrix& A, const Matrix& B);
// C = A * B^T
Matrix matmul_a_bt(const Matrix& A, const Matrix& B);

// Y = S * X for the sparse normalized adjacency.
Matrix spmm_serial(const NormalizedAdjacency& S, const Matrix& X);
Matrix spmm(const NormalizedAdjacency& S, const Matrix& X);

// Broadcast a 1xC bias row onto every row of M, in place.
void add_row_vector(Matrix& M, const Matrix& bias);

Matrix relu(const Matrix& M);
// dZ = dY where Z > 0 else 0
Matrix relu_backward(const Matrix& dY, const Matrix& Z);
// 1xC column sums
Matrix column_sums(const Matrix& M);
// 1xC column means
Matrix column_means(const Matrix& M);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

inline void check_shape(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace fedpub
