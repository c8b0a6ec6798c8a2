#pragma once

#include <stdexcept>
#include <string>

namespace jsvuln {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem or network failure that stops the current stage.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input text (JSON, diff, CSV, JavaScript).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input that parses but violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace jsvuln
