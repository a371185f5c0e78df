#pragma once

#include <stdexcept>
#include <string>

namespace glados {

// Base of every error raised by the library. Each subclass corresponds to one
// failure mode a caller may want to handle separately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class MismatchedIntrinsics : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class MalformedFile : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

class EmptyAlignment : public Error {
 public:
  using Error::Error;
};

class InsufficientValidPixels : public Error {
 public:
  using Error::Error;
};

class RejectedAlignment : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class CannotSeparate : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A prior (generative/geometric model client) failed. `stage` names the
// operator, e.g. "inpaint" or "depth".
class ClientError : public Error {
 public:
  ClientError(std::string stage, std::string detail)
      : Error("client '" + stage + "' failed: " + detail),
        stage_(std::move(stage)),
        detail_(std::move(detail)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string stage_;
  std::string detail_;
};

}  // namespace glados
