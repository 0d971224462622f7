#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nextvit {

enum class ErrorKind {
  ShapeMismatch,
  GroupMismatch,
  HeadMismatch,
  InvalidRatio,
  InvalidPattern,
  InvalidArgument,
  NonFinite,
  NotOnTape,
  MissingParam,
  NotFoldable,
  SignatureMismatch,
  BadMagic,
  BadVersion,
  TruncatedFile,
  TrailingData,
  DuplicateName,
  DtypeUnsupported,
  ParseError,
  UnknownKey,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace nextvit
