#include "comil/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace comil {

namespace {

[[noreturn]] void throw_shape(const char* op, std::size_t ar, std::size_t ac,
                              std::size_t br, std::size_t bc) {
    throw ShapeError(std::string(op) + ": shape (" + std::to_string(ar) + "x" +
                     std::to_string(ac) + ") vs (" + std::to_string(br) + "x" +
                     std::to_string(bc) + ")");
}

} // namespace

Mat64 Mat64::identity(std::size_t n) {
    Mat64 m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Vec64 affine(const Vec64& x, const Mat64& w, const Vec64& b) {
    if (w.cols != x.size()) throw_shape("affine: W*x", w.rows, w.cols, x.size(), 1);
    if (b.size() != w.rows) throw_shape("affine: +b", w.rows, w.cols, b.size(), 1);
    Vec64 y(b);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data.data() + r * w.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
    return y;
}

Vec64 mat_vec(const Mat64& w, const Vec64& x) {
    if (w.cols != x.size()) throw_shape("mat_vec", w.rows, w.cols, x.size(), 1);
    Vec64 y(w.rows, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data.data() + r * w.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

Vec64 mat_tvec(const Mat64& w, const Vec64& x) {
    if (w.rows != x.size()) throw_shape("mat_tvec", w.rows, w.cols, x.size(), 1);
    Vec64 y(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* row = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) y[c] += row[c] * x[r];
    }
    return y;
}

void add_outer(Mat64& acc, const Vec64& a, const Vec64& b) {
    if (acc.rows != a.size() || acc.cols != b.size())
        throw_shape("add_outer", acc.rows, acc.cols, a.size(), b.size());
    for (std::size_t r = 0; r < acc.rows; ++r) {
        double* row = acc.data.data() + r * acc.cols;
        for (std::size_t c = 0; c < acc.cols; ++c) row[c] += a[r] * b[c];
    }
}

Vec64 softmax(const Vec64& s) {
    if (s.empty()) throw ContractError("softmax: empty input");
    const double m = *std::max_element(s.begin(), s.end());
    Vec64 out(s.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = std::exp(s[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Vec64 tanh_vec(const Vec64& x) {
    Vec64 y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

double dot(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw_shape("dot", a.size(), 1, b.size(), 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double euclidean_distance(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw_shape("euclidean_distance", a.size(), 1, b.size(), 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double log_sum_exp(const Vec64& v) {
    if (v.empty()) throw ContractError("log_sum_exp: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - m);
    return m + std::log(sum);
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

bool all_finite(const Vec64& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace comil
