#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace volterra {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Argument outside the mathematical domain of an operation (time outside
/// [0,T], unsupported order, grid not containing a conditioning time...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numerical breakdown: singular systems, non-finite driver values,
/// failed contraction.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on malformed configuration or expressions; `key` names the
/// offending entry when one exists.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Time tolerance used when matching a time against grid nodes.
inline constexpr double kTimeEps = 1e-12;

}  // namespace volterra
