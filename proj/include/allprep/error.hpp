#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace allprep {

enum class Errc {
  FileNotFound,
  UnsupportedFormat,
  CorruptImage,
  IoError,
  ZeroTarget,
  ShapeMismatch,
  InvalidArgument,
  UnknownClassDirectory,
  EmptyClass,
  InsufficientSamples,
  TargetBelowCurrent,
  IndivisibleHeads,
  InvalidDistribution,
  UnknownLabel,
  ParseError,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::CorruptImage: return "CorruptImage";
    case Errc::IoError: return "IoError";
    case Errc::ZeroTarget: return "ZeroTarget";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnknownClassDirectory: return "UnknownClassDirectory";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::TargetBelowCurrent: return "TargetBelowCurrent";
    case Errc::IndivisibleHeads: return "IndivisibleHeads";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (the CLI in particular) can map it to a message and exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace allprep
