#ifndef L2CAL_ERROR_HPP
#define L2CAL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace l2cal {

/// Bad user input: malformed data, invalid kernel parameters, domain violations.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine failed (factorization, non-finite values).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double jitter = 0.0)
        : std::runtime_error(what), jitter_(jitter) {}

    /// Last diagonal jitter tried before giving up (0 when not applicable).
    double jitter() const noexcept { return jitter_; }

private:
    double jitter_;
};

class OptimizationError : public std::runtime_error {
public:
    explicit OptimizationError(const std::string& what) : std::runtime_error(what) {}
};

inline const char* error_kind(const std::exception& e) noexcept {
    if (dynamic_cast<const InputError*>(&e)) return "input_error";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical_error";
    if (dynamic_cast<const OptimizationError*>(&e)) return "optimization_error";
    return "error";
}

}  // namespace l2cal

#endif
