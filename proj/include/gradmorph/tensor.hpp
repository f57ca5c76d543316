#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace gradmorph {

// Dense n-dimensional array of 64-bit reals, row-major.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);
    Tensor(std::vector<int> s, std::vector<double> values);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // Rank-3 [C,H,W] accessors.
    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    // Rank-4 [O,I,KH,KW] accessor.
    double& at4(int o, int i, int ky, int kx) {
        return data[((static_cast<std::size_t>(o) * shape[1] + i) * shape[2] + ky) * shape[3] + kx];
    }
    double at4(int o, int i, int ky, int kx) const {
        return data[((static_cast<std::size_t>(o) * shape[1] + i) * shape[2] + ky) * shape[3] + kx];
    }

    bool all_finite() const;
    double linf() const;  // max |x|, 0 for empty

    std::string shape_str() const;
};

std::int64_t shape_product(const std::vector<int>& s);
std::string shape_to_string(const std::vector<int>& s);

// Per-pixel label image.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;

    LabelMap() = default;
    LabelMap(int h, int w, int fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

    int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    bool same_shape(const LabelMap& o) const { return height == o.height && width == o.width; }
    int max_label() const;
};

}  // namespace gradmorph
