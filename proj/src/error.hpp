#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exaranker {

enum class ErrorCode {
    invalid_argument,
    config,
    io,
    parse,
    invariant,
    insufficient_data,
    network,
    protocol,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Malformed input. `line()` is 1-based, 0 when the error is not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error(ErrorCode::parse, line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorCode::config, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCode::io, message) {}
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& message) : Error(ErrorCode::invariant, message) {}
};

class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& message) : Error(ErrorCode::insufficient_data, message) {}
};

class NetworkError : public Error {
public:
    NetworkError(const std::string& message, bool retryable)
        : Error(ErrorCode::network, message), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

/// The remote endpoint answered, but with a body that does not follow the wire protocol.
class ProtocolError : public Error {
public:
    ProtocolError(const std::string& message, std::string raw_body)
        : Error(ErrorCode::protocol, message), raw_body_(std::move(raw_body)) {}
    const std::string& raw_body() const noexcept { return raw_body_; }

private:
    std::string raw_body_;
};

}  // namespace exaranker
