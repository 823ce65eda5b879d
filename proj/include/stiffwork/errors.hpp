#pragma once

#include <stdexcept>
#include <string>

namespace stiffwork {

// Bad input: config values, precondition violations. CLI maps this to exit 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical accuracy budget exceeded (norm drift, non-convergence). CLI maps this to exit 3.
struct NumericBudgetError : std::runtime_error {
    explicit NumericBudgetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stiffwork
