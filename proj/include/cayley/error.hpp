#pragma once

#include <stdexcept>
#include <string>

namespace cayley {

// Base of everything the library throws on bad input or failed numerics.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class invalid_parameter : public error {
public:
    using error::error;
};

// Argument outside the analytic domain (branch cut, spectrum, radius of convergence).
class domain_error : public error {
public:
    using error::error;
};

class capacity_error : public error {
public:
    using error::error;
};

class index_error : public error {
public:
    using error::error;
};

class contract_violation : public error {
public:
    using error::error;
};

class size_error : public error {
public:
    using error::error;
};

class unsupported : public error {
public:
    using error::error;
};

// An iterative method hit its cap; carries the last achieved residual.
class convergence_failure : public error {
public:
    convergence_failure(const std::string& what, double last_residual)
        : error(what + " (last residual " + std::to_string(last_residual) + ")"),
          residual_(last_residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Quantities defined only when the perturbation lifts the norm.
class no_hidden_spectrum : public error {
public:
    using error::error;
};

// Transience quantity requested for a recurrent family.
class recurrent_case : public error {
public:
    using error::error;
};

} // namespace cayley
