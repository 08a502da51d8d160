#pragma once

#include <cstddef>
#include <vector>

#include "comil/errors.hpp"

namespace comil {

using Vec64 = std::vector<double>;

// Dense row-major matrix of 64-bit floats.
struct Mat64 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec64 data; // rows * cols entries

    Mat64() = default;
    Mat64(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    static Mat64 identity(std::size_t n);

    bool operator==(const Mat64&) const = default;
};

// y = Wx + b
Vec64 affine(const Vec64& x, const Mat64& w, const Vec64& b);

// y = Wx
Vec64 mat_vec(const Mat64& w, const Vec64& x);

// y = W^T x
Vec64 mat_tvec(const Mat64& w, const Vec64& x);

// acc += a b^T
void add_outer(Mat64& acc, const Vec64& a, const Vec64& b);

// Max-subtracted softmax; output is nonnegative and sums to 1.
Vec64 softmax(const Vec64& s);

Vec64 tanh_vec(const Vec64& x);

double dot(const Vec64& a, const Vec64& b);

double euclidean_distance(const Vec64& a, const Vec64& b);

double log_sum_exp(const Vec64& v);

double sigmoid(double x);

// log(1 + e^x) without overflow.
double softplus(double x);

bool all_finite(const Vec64& v);

} // namespace comil
