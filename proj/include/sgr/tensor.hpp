#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <random>
#include <sstream>
#include <vector>

#include "sgr/error.hpp"

namespace sgr {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN,
// column vectors Nx1. All numerics in the project run through this type.
struct Tensor {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0) : n_rows(rows), n_cols(cols) {
        require(rows >= 0 && cols >= 0, "Tensor: negative dimension");
        data.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), fill);
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols, 0.0); }

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }

    static Tensor row(const std::vector<double>& v) {
        Tensor t(1, static_cast<int>(v.size()));
        t.data = v;
        return t;
    }

    static Tensor col(const std::vector<double>& v) {
        Tensor t(static_cast<int>(v.size()), 1);
        t.data = v;
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Tensor t(static_cast<int>(rows.size()),
                 rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
        int r = 0;
        for (const auto& row : rows) {
            require(static_cast<int>(row.size()) == t.n_cols, "Tensor::from_rows: ragged rows");
            int c = 0;
            for (double v : row) t.at(r, c++) = v;
            ++r;
        }
        return t;
    }

    int rows() const { return n_rows; }
    int cols() const { return n_cols; }
    size_t size() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * n_cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * n_cols + c]; }

    double item() const {
        require(n_rows == 1 && n_cols == 1, "Tensor::item: not a scalar, shape " + shape_str());
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return n_rows == o.n_rows && n_cols == o.n_cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << n_rows << "x" << n_cols;
        return os.str();
    }
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "Tensor+: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "Tensor-: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Tensor operator*(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

namespace detail {

// C += A * B, all row-major. The ikj order keeps the inner loop contiguous.
inline void gemm_nn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        double* crow = &c.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T
inline void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        double* crow = &c.data[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            const double* brow = &b.data[static_cast<size_t>(j) * k];
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C += A^T * B
inline void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int m = a.cols(), k = a.rows(), n = b.cols();
    for (int p = 0; p < k; ++p) {
        const double* arow = &a.data[static_cast<size_t>(p) * m];
        const double* brow = &b.data[static_cast<size_t>(p) * n];
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = &c.data[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace detail

inline Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(),
            "matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
    Tensor c(a.rows(), b.cols());
    detail::gemm_nn_acc(a, b, c);
    return c;
}

inline Tensor transpose_plain(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

// Deterministic uniform in [0,1). std::uniform_real_distribution is
// implementation-defined, so draws are derived from raw engine output.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline Tensor random_uniform(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    for (double& v : t.data) v = uniform_range(rng, lo, hi);
    return t;
}

} // namespace sgr
