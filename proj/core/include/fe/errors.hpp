#pragma once

#include <stdexcept>
#include <string>

namespace fe {

/// Runtime failure of an operation (I/O, backend, degenerate geometry).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented contract: bad manifests, mismatched
/// dimensions, unknown ids. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The known region cannot feed the synthesis (no complete source patch,
/// no known pixel on a plane).
class InsufficientContextError : public Error {
 public:
  using Error::Error;
};

/// An inpainting backend failed; carries the backend identity.
class BackendError : public Error {
 public:
  BackendError(std::string backend, const std::string& cause)
      : Error(backend + ": " + cause), backend_(std::move(backend)) {}

  const std::string& backend() const noexcept { return backend_; }

 private:
  std::string backend_;
};

}  // namespace fe
