#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace prcnn {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Seed {
    std::uint64_t value = 0;
};

using Rng = std::mt19937_64;

// Dense N-d array of doubles, row-major, last axis fastest.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) {
        return data_[i * shape_[1] + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        return data_[i * shape_[1] + j];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// [m x n] * [n] -> [m]
Tensor matvec(const Tensor& a, const Tensor& x);

// a^T * x where a is [m x n] and x is [m]; result [n]
Tensor matvec_transposed(const Tensor& a, const Tensor& x);

Tensor map_elementwise(const Tensor& t, const std::function<double(double)>& f);
Tensor zip_elementwise(const Tensor& a, const Tensor& b,
                       const std::function<double(double, double)>& f);

// in-place accumulation helpers used by gradient reduction
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(Tensor& dst, double alpha, const Tensor& src);
void scale_inplace(Tensor& t, double alpha);

// rank-3 [C x T x F]: insert `amount` zero frames on each side of the time axis
Tensor pad_time_axis(const Tensor& t, std::size_t amount);
Tensor crop_time_axis(const Tensor& t, std::size_t amount);

enum class InitScheme { uniform_scaled, zeros };

// uniform_scaled draws from U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
// Fans are derived from shape: rank 1 uses n/n, rank 2 uses [out x in],
// rank >= 3 treats trailing extents as the receptive field.
Tensor random_init(const std::vector<std::size_t>& shape, InitScheme scheme, Seed seed);
Tensor uniform_scaled(const std::vector<std::size_t>& shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng);

}  // namespace prcnn
