#pragma once

// Dense row-major tensor with a small fixed set of shapes used across the
// pipeline: [N] vectors, [N,C] matrices, and [N,C,H,W] frame stacks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tinyvsr {

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), T(0)); }
    static Tensor full(std::vector<int> shape, T v) { return Tensor(std::move(shape), v); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 4-d accessor for [N,C,H,W] tensors
    T& at(int n, int c, int h, int w) {
        return data_[idx4(n, c, h, w)];
    }
    const T& at(int n, int c, int h, int w) const {
        return data_[idx4(n, c, h, w)];
    }
    int64_t idx4(int n, int c, int h, int w) const {
        return ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    // 2-d accessor for [N,C]
    T& at(int n, int c) { return data_[static_cast<size_t>(n) * shape_[1] + c]; }
    const T& at(int n, int c) const { return data_[static_cast<size_t>(n) * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size()) throw std::invalid_argument("reshape: element count mismatch");
        Tensor out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (int i = 0; i < t.ndim(); ++i) s += std::to_string(t.dim(i)) + (i + 1 < t.ndim() ? "," : "");
    return s + "]";
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// ---------------------------------------------------------------------------
// Seeding: one master seed, named derived streams so each subsystem draws
// from an independent reproducible sequence.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, std::string_view stream) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(master ^ h);
}

class RngStream {
public:
    explicit RngStream(uint64_t seed) : gen_(seed) {}
    RngStream(uint64_t master, std::string_view stream) : gen_(derive_seed(master, stream)) {}

    template <typename T>
    T normal() {
        std::normal_distribution<T> d(T(0), T(1));
        return d(gen_);
    }
    template <typename T>
    T uniform(T lo, T hi) {
        std::uniform_real_distribution<T> d(lo, hi);
        return d(gen_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        std::uniform_int_distribution<int> d(lo, hi);
        return d(gen_);
    }
    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

template <typename T>
Tensor<T> randn(std::vector<int> shape, RngStream& rng, T scale = T(1)) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal<T>() * scale;
    return t;
}

}  // namespace tinyvsr
