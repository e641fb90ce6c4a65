#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "drq/errors.hpp"

namespace drq {

// Dense row-major matrix. Row vectors use rows == 1.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {
        if (r < 0 || c < 0) throw shape_error("negative dimension");
    }
    Mat(int r, int c, std::vector<T> data) : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != static_cast<size_t>(r) * c) throw shape_error("data size mismatch");
    }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    template <typename U>
    Mat<U> cast() const {
        Mat<U> out(rows, cols);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

inline void check_shape(bool ok, const std::string& what) {
    if (!ok) throw shape_error(what);
}

} // namespace drq
