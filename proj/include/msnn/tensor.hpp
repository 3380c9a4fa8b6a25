#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "msnn/error.hpp"

namespace msnn {

// Dense n-dimensional array, row-major (last axis fastest). The numeric
// engine is instantiated for float (training) and double (gradient-check
// mode); both share the code paths in graph.cpp.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), values(numel_of(shape), T(0)) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != numel_of(shape))
            throw shape_error("tensor: " + std::to_string(values.size()) +
                              " values for shape with " + std::to_string(numel_of(shape)) +
                              " elements");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    static Tensor full(std::vector<std::size_t> s, T value) {
        Tensor t(std::move(s));
        for (T& v : t.values) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    std::size_t numel() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }

    T& operator[](std::size_t i) { return values[i]; }
    const T& operator[](std::size_t i) const { return values[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // NaN/Inf are rejected where data enters the engine (graph inputs,
    // parameter init, file loads); internal ops cannot create them from
    // finite inputs.
    void validate_finite(const std::string& context) const {
        for (const T& v : values) {
            if (!std::isfinite(static_cast<double>(v)))
                throw data_error(context + ": non-finite value in tensor");
        }
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace msnn
