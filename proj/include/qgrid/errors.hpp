#ifndef QGRID_ERRORS_HPP
#define QGRID_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace qgrid {

// Base error carrying a stable machine-parsable code alongside the human
// message. The CLI prints failures as "error: <code>: <what>".
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct NoKeyError : Error {
    explicit NoKeyError(const std::string& msg) : Error("no-key-ever", msg) {}
};

struct IvExhaustedError : Error {
    explicit IvExhaustedError(const std::string& msg) : Error("iv-exhausted", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io-error", msg) {}
};

// Carries the offending field so scenario validation failures point at the cause.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& msg)
        : Error("config-error", field + ": " + msg), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct BrokerUnavailableError : Error {
    explicit BrokerUnavailableError(const std::string& msg) : Error("broker-unavailable", msg) {}
};

struct NotConnectedError : Error {
    explicit NotConnectedError(const std::string& msg) : Error("not-connected", msg) {}
};

struct BadLengthError : Error {
    explicit BadLengthError(const std::string& msg) : Error("bad-length", msg) {}
};

struct KeygenTimeoutError : Error {
    explicit KeygenTimeoutError(const std::string& msg) : Error("keygen-timeout", msg) {}
};

struct CryptoError : Error {
    explicit CryptoError(const std::string& msg) : Error("crypto-error", msg) {}
};

} // namespace qgrid

#endif
