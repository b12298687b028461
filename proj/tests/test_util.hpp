#pragma once

#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cocole/error.hpp"
#include "cocole/gradcheck.hpp"
#include "cocole/rng.hpp"
#include "cocole/tensor.hpp"

namespace cocole::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = scale * rng.normal();
    return Tensor(std::move(shape), std::move(v));
}

// Analytic gradient of a scalar-valued tensor function at x, via a fresh tape.
inline std::vector<double> autodiff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    Tape tape;
    auto leaf = tape.leaf(x);
    tape.backward(f(leaf));
    return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
}

// Relative error between autodiff and central differences for f at x.
inline double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    auto analytic = autodiff_grad(f, x);
    auto numeric = finite_diff_grad([&](const Tensor& p) { return f(p).item(); }, x, h);
    return relative_error(analytic, numeric.data());
}

inline void expect_error(ErrorKind kind, const std::function<void()>& fn) {
    try {
        fn();
        ADD_FAILURE() << "expected error " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

// Message check for errors that must name a remedy.
inline void expect_error_containing(ErrorKind kind, const std::string& text, const std::function<void()>& fn) {
    try {
        fn();
        ADD_FAILURE() << "expected error " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
        EXPECT_NE(std::string(e.what()).find(text), std::string::npos) << e.what();
    }
}

inline std::string source_path(const std::string& rel) { return std::string(COCOLE_SOURCE_DIR) + "/" + rel; }

}  // namespace cocole::testing
