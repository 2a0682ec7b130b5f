#pragma once

#include <stdexcept>
#include <string>

namespace gmfv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Feature-file problems carry a machine-checkable code so callers can tell
// bad magic, wrong version and truncation apart without string matching.
struct FeatureFileError : Error {
  enum class Code {
    IoFailure,
    BadMagic,
    BadVersion,
    BadRank,
    BadShape,
    Truncated,
    TrailingBytes,
    NonFinite,
  };
  Code code;
  FeatureFileError(Code c, const std::string& what) : Error(what), code(c) {}
};

struct ManifestError : Error {
  enum class Code { Malformed, MissingField, BadValue, DuplicateId, IoFailure };
  Code code;
  ManifestError(Code c, const std::string& what) : Error(what), code(c) {}
};

struct ShapeError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct MetricError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace gmfv
