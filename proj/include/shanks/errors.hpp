#pragma once

#include <stdexcept>
#include <string>

namespace shanks {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant (bad file, bad transcript, bad shape).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A rule-based annotation step is missing data it needs.
class AnnotationError : public Error {
public:
    using Error::Error;
};

/// Broken internal precondition (e.g. a splice span outside its chunk).
class InternalError : public Error {
public:
    using Error::Error;
};

/// The generation context no longer fits the model window.
class ContextOverflowError : public Error {
public:
    using Error::Error;
};

/// Remote call failed. `retriable()` distinguishes timeouts/5xx from protocol errors.
class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retriable)
        : Error(what), retriable_(retriable) {}

    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

} // namespace shanks
