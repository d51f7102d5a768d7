#pragma once

#include <stdexcept>
#include <string>

namespace kernest {

// Base for every error raised by the library. Callers that only need a
// message can catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. a strike
// beyond the grid bound).
class DomainError : public Error {
public:
    using Error::Error;
};

// Objects defined on different grids were combined.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed generator or configuration specification.
class SpecError : public Error {
public:
    using Error::Error;
};

// Invalid data handed to an estimator or checker.
class InputError : public Error {
public:
    using Error::Error;
};

// A precondition of an analysis routine does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Parse failure in an ingested file; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace kernest
