#include "crackscope/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "crackscope/error.hpp"

namespace crackscope {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::InvalidKernel: return "InvalidKernel";
    case ErrorKind::NotDifferentiable: return "NotDifferentiable";
    case ErrorKind::InvalidBox: return "InvalidBox";
    case ErrorKind::InvalidPrediction: return "InvalidPrediction";
    case ErrorKind::InvalidImage: return "InvalidImage";
    case ErrorKind::DegenerateComponent: return "DegenerateComponent";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    case ErrorKind::MalformedLabel: return "MalformedLabel";
    case ErrorKind::MalformedPrediction: return "MalformedPrediction";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::InvalidSplit: return "InvalidSplit";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::InvalidParams: return "InvalidParams";
    }
    return "Unknown";
}

std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.numel()) {
        fail(ErrorKind::InvalidShape, "tensor " + to_string(shape_) + " needs " +
                                          std::to_string(shape_.numel()) + " values, got " +
                                          std::to_string(values_.size()));
    }
}

Tensor Tensor::from_vector(std::span<const double> values) {
    return Tensor({1, 1, 1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (auto& v : t.values_) v = dist(rng);
    return t;
}

std::span<double> Tensor::plane(std::size_t n, std::size_t c) {
    return std::span<double>(values_).subspan(index(n, c, 0, 0), shape_.plane());
}

std::span<const double> Tensor::plane(std::size_t n, std::size_t c) const {
    return std::span<const double>(values_).subspan(index(n, c, 0, 0), shape_.plane());
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!(shape_ == other.shape_)) {
        fail(ErrorKind::InvalidShape, "add: " + to_string(shape_) + " vs " + to_string(other.shape_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : values_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) {
    a += b;
    return a;
}

Tensor operator*(double s, Tensor a) {
    a *= s;
    return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        fail(ErrorKind::InvalidShape, "compare: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) fail(ErrorKind::InvalidShape, "dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Tensor parse_tensor(std::string_view text) {
    std::istringstream in{std::string(text)};
    Shape s;
    if (!(in >> s.n >> s.c >> s.h >> s.w)) fail(ErrorKind::InvalidShape, "tensor fixture: bad header");
    std::vector<double> values;
    values.reserve(s.numel());
    std::string token;
    while (in >> token) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc{} || ptr != token.data() + token.size()) {
            fail(ErrorKind::InvalidShape, "tensor fixture: bad value '" + token + "'");
        }
        values.push_back(v);
    }
    return Tensor(s, std::move(values));
}

std::string format_tensor(const Tensor& t) {
    std::string out = std::to_string(t.n()) + ' ' + std::to_string(t.c()) + ' ' + std::to_string(t.h()) +
                      ' ' + std::to_string(t.w()) + '\n';
    char buf[32];
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, t[i]);
        out.append(buf, ptr);
        out += ((i + 1) % std::max<std::size_t>(t.w(), 1) == 0) ? '\n' : ' ';
    }
    return out;
}

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) fail(ErrorKind::InvalidShape, "matrix value count mismatch");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

}  // namespace crackscope
