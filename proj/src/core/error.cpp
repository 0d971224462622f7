#include "nextvit/error.hpp"

namespace nextvit {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::GroupMismatch: return "GroupMismatch";
    case ErrorKind::HeadMismatch: return "HeadMismatch";
    case ErrorKind::InvalidRatio: return "InvalidRatio";
    case ErrorKind::InvalidPattern: return "InvalidPattern";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotOnTape: return "NotOnTape";
    case ErrorKind::MissingParam: return "MissingParam";
    case ErrorKind::NotFoldable: return "NotFoldable";
    case ErrorKind::SignatureMismatch: return "SignatureMismatch";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::BadVersion: return "BadVersion";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::TrailingData: return "TrailingData";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::DtypeUnsupported: return "DtypeUnsupported";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace nextvit
