#include "prcnn/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace prcnn {

namespace {

std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) {
        throw DimensionError("tensor rank must be >= 1");
    }
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw DimensionError("tensor extents must be >= 1, got shape " + shape_string(shape));
        }
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + prcnn::shape_string(shape_));
    }
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                             std::to_string(shape_.size()));
    }
    return shape_[axis];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const { return prcnn::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul expects rank-2 operands, got " + a.shape_string() +
                             " and " + b.shape_string());
    }
    if (a.extent(1) != b.extent(0)) {
        throw DimensionError("matmul inner extents differ: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            const double* brow = b.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += aip * brow[j];
            }
        }
    }
    return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.extent(1) != x.extent(0)) {
        throw DimensionError("matvec shape mismatch: " + a.shape_string() + " vs " +
                             x.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += arow[j] * x[j];
        out[i] = acc;
    }
    return out;
}

Tensor matvec_transposed(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.extent(0) != x.extent(0)) {
        throw DimensionError("matvec_transposed shape mismatch: " + a.shape_string() +
                             " vs " + x.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * n;
        const double xi = x[i];
        for (std::size_t j = 0; j < n; ++j) out[j] += arow[j] * xi;
    }
    return out;
}

Tensor map_elementwise(const Tensor& t, const std::function<double(double)>& f) {
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(t[i]);
    return out;
}

Tensor zip_elementwise(const Tensor& a, const Tensor& b,
                       const std::function<double(double, double)>& f) {
    if (!a.same_shape(b)) {
        throw DimensionError("zip_elementwise shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    if (!dst.same_shape(src)) {
        throw DimensionError("add_inplace shape mismatch: " + dst.shape_string() + " vs " +
                             src.shape_string());
    }
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void axpy_inplace(Tensor& dst, double alpha, const Tensor& src) {
    if (!dst.same_shape(src)) {
        throw DimensionError("axpy_inplace shape mismatch: " + dst.shape_string() + " vs " +
                             src.shape_string());
    }
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

void scale_inplace(Tensor& t, double alpha) {
    double* d = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] *= alpha;
}

Tensor pad_time_axis(const Tensor& t, std::size_t amount) {
    if (t.rank() != 3) {
        throw DimensionError("pad_time_axis expects rank-3 [CxTxF], got " + t.shape_string());
    }
    if (amount == 0) return t;
    const std::size_t c = t.extent(0), tt = t.extent(1), f = t.extent(2);
    Tensor out({c, tt + 2 * amount, f});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < tt; ++i) {
            const double* src = t.data() + (ch * tt + i) * f;
            double* dst = out.data() + (ch * (tt + 2 * amount) + i + amount) * f;
            std::copy(src, src + f, dst);
        }
    }
    return out;
}

Tensor crop_time_axis(const Tensor& t, std::size_t amount) {
    if (t.rank() != 3) {
        throw DimensionError("crop_time_axis expects rank-3 [CxTxF], got " + t.shape_string());
    }
    if (amount == 0) return t;
    const std::size_t c = t.extent(0), tt = t.extent(1), f = t.extent(2);
    if (tt <= 2 * amount) {
        throw DimensionError("crop amount " + std::to_string(amount) +
                             " too large for time extent " + std::to_string(tt));
    }
    const std::size_t inner = tt - 2 * amount;
    Tensor out({c, inner, f});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < inner; ++i) {
            const double* src = t.data() + (ch * tt + i + amount) * f;
            std::copy(src, src + f, out.data() + (ch * inner + i) * f);
        }
    }
    return out;
}

Tensor uniform_scaled(const std::vector<std::size_t>& shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist(rng);
    return out;
}

Tensor random_init(const std::vector<std::size_t>& shape, InitScheme scheme, Seed seed) {
    if (scheme == InitScheme::zeros) return Tensor(shape);
    std::size_t fan_in = 1, fan_out = 1;
    if (shape.size() == 1) {
        fan_in = fan_out = shape[0];
    } else {
        std::size_t receptive = 1;
        for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
        fan_out = shape[0] * receptive;
        fan_in = shape[1] * receptive;
    }
    Rng rng(seed.value);
    return uniform_scaled(shape, fan_in, fan_out, rng);
}

}  // namespace prcnn
