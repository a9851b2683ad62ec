#ifndef EBSDCS_ERRORS_HPP
#define EBSDCS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ebsdcs {

// Argument or configuration outside an operation's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed file contents (bad header, unparsable field).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File missing, truncated or unwritable.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A sampler produced a non-finite quantity.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, std::size_t sweep)
        : std::runtime_error(what + " (sweep " + std::to_string(sweep) + ")"), sweep_(sweep) {}

    std::size_t sweep() const noexcept { return sweep_; }

private:
    std::size_t sweep_;
};

} // namespace ebsdcs

#endif
