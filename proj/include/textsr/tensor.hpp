#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace textsr {

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

#define TEXTSR_CHECK(cond, msg)                                                   \
    do {                                                                          \
        if (!(cond)) {                                                            \
            std::ostringstream oss_;                                              \
            oss_ << msg;                                                          \
            throw ::textsr::TensorError(oss_.str());                              \
        }                                                                         \
    } while (0)

// Dense row-major tensor. Shapes are small, data is contiguous.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(size_t(count(shape_)), fill) {}

    Tensor(std::initializer_list<int64_t> shape, T fill = T(0))
        : Tensor(std::vector<int64_t>(shape), fill) {}

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(T v) { return Tensor({int64_t(1)}, v); }

    static Tensor from_vector(std::vector<int64_t> shape, std::vector<T> data) {
        Tensor t;
        TEXTSR_CHECK(count(shape) == int64_t(data.size()),
                     "tensor shape/data mismatch: " << count(shape) << " vs " << data.size());
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    int64_t numel() const { return int64_t(data_.size()); }
    int ndim() const { return int(shape_.size()); }
    int64_t dim(int i) const { return shape_[size_t(i)]; }
    const std::vector<int64_t>& shape() const { return shape_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[size_t(i)]; }
    const T& operator[](int64_t i) const { return data_[size_t(i)]; }

    // 2D / 3D / 4D indexed access (row-major)
    T& at(int64_t i, int64_t j) { return data_[size_t(i * shape_[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return data_[size_t(i * shape_[1] + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return data_[size_t((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[size_t(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    Tensor reshaped(std::vector<int64_t> shape) const {
        TEXTSR_CHECK(count(shape) == numel(), "reshape numel mismatch");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out = Tensor<U>(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = U(data_[size_t(i)]);
        return out;
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::string shape_str() const {
        std::ostringstream oss;
        oss << "[";
        for (size_t i = 0; i < shape_.size(); ++i) oss << (i ? "," : "") << shape_[i];
        oss << "]";
        return oss.str();
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace textsr
