#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crackscope {

// Extents of a 4-D tensor in batch/channel/height/width order.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Dense NCHW tensor of doubles, row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    // Shape [1,1,1,len]; used to carry vectors (biases, 1-D kernels) through the generic op interface.
    static Tensor from_vector(std::span<const double> values);
    static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

    const Shape& shape() const { return shape_; }
    std::size_t n() const { return shape_.n; }
    std::size_t c() const { return shape_.c; }
    std::size_t h() const { return shape_.h; }
    std::size_t w() const { return shape_.w; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return values_[index(n, c, h, w)];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return values_[index(n, c, h, w)];
    }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> data() { return values_; }
    std::span<const double> data() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    // Contiguous H*W plane for (n, c).
    std::span<double> plane(std::size_t n, std::size_t c);
    std::span<const double> plane(std::size_t n, std::size_t c) const;

    bool all_finite() const;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

private:
    Shape shape_{};
    std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

// Plain-text fixture: first line "N C H W", then whitespace-separated row-major values.
Tensor parse_tensor(std::string_view text);
std::string format_tensor(const Tensor& t);

// Row-major dense matrix, used for the fully connected layers.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v);

    static Matrix identity(std::size_t n);

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

}  // namespace crackscope
