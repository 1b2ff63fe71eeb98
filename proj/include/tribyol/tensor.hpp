#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tribyol/error.hpp"

namespace tribyol {

// Dense row-major float tensor. Image batches are kept NHWC, weights use
// whatever layout the owning layer documents.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : dims(std::move(shape)) {
        storage.assign((size_t)numel_of(dims), 0.0f);
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims); }

    const std::vector<int64_t>& shape() const { return dims; }
    int64_t dim(size_t i) const { return dims.at(i); }
    size_t rank() const { return dims.size(); }

    int64_t numel() const { return numel_of(dims); }
    bool empty() const { return storage.empty(); }

    float* data() { return storage.data(); }
    const float* data() const { return storage.data(); }
    std::span<float> values() { return storage; }
    std::span<const float> values() const { return storage; }

    float& operator[](size_t i) { return storage[i]; }
    float operator[](size_t i) const { return storage[i]; }

    void fill(float v) { std::fill(storage.begin(), storage.end(), v); }
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    void reshape(std::vector<int64_t> new_shape) {
        if (numel_of(new_shape) != numel())
            throw DimensionError("reshape: element count mismatch " + shape_str(dims) +
                                 " -> " + shape_str(new_shape));
        dims = std::move(new_shape);
    }

    static std::string shape_str(const std::vector<int64_t>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }
    std::string shape_str() const { return shape_str(dims); }

private:
    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<int64_t> dims;
    std::vector<float> storage;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(where) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
}

} // namespace tribyol
