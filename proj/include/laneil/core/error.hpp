#pragma once

#include <stdexcept>
#include <string>

namespace laneil {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  Format,
  Config,
  Runtime,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Binary file decoding failures carry the byte offset at which decoding stopped.
class FormatError : public Error {
 public:
  enum class Reason { BadMagic, BadVersion, BadHeader, Truncated, InvalidValue };

  FormatError(Reason reason, std::size_t offset, const std::string& what)
      : Error(ErrorKind::Format, what), reason_(reason), offset_(offset) {}

  Reason reason() const noexcept { return reason_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Reason reason_;
  std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace laneil
