#pragma once

#include <stdexcept>
#include <string>

namespace sttn {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto its exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

// Incompatible extents or an invalid mode index.
class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape"; }
};

// Input data that violates a documented invariant (non-finite values,
// empty classes, non-monotone frame indices).
class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data"; }
};

// Malformed file contents. Carries the 1-based record number.
class ParseError : public DataError {
public:
    ParseError(std::size_t record, const std::string& what)
        : DataError("record " + std::to_string(record) + ": " + what), record_(record) {}
    const char* kind() const noexcept override { return "parse"; }
    std::size_t record() const noexcept { return record_; }

private:
    std::size_t record_;
};

// Invalid user-supplied configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string field = {})
        : Error(what), field_(std::move(field)) {}
    const char* kind() const noexcept override { return "config"; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Non-finite intermediate or failed numerical solve. `where` names the layer.
class NumericError : public Error {
public:
    NumericError(std::string where, const std::string& what)
        : Error(where + ": " + what), where_(std::move(where)) {}
    const char* kind() const noexcept override { return "numeric"; }
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

}  // namespace sttn
