#pragma once

#include <stdexcept>
#include <string>

namespace atlasforge {

// Base class for all recoverable errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Volume file does not start with the expected magic bytes.
class BadMagicError : public Error {
 public:
  using Error::Error;
};

// File ended before the payload implied by its header was read.
class TruncatedFileError : public Error {
 public:
  using Error::Error;
};

// Payload size disagrees with dims * dtype (e.g. trailing bytes).
class PayloadSizeError : public Error {
 public:
  using Error::Error;
};

class DimsMismatchError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

// Histogram matching against a constant reference image.
class DegenerateReferenceError : public Error {
 public:
  using Error::Error;
};

// A region of interest is absent from every label volume.
class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

// Fewer templates than the requested number of similar patches.
class InsufficientTemplatesError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

// Trained model artifacts missing or incomplete.
class MissingModelError : public Error {
 public:
  using Error::Error;
};

// Stored artifact refers to a different geometry than the one supplied.
class VersionMismatchError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace atlasforge
