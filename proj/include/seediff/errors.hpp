#pragma once

#include <stdexcept>
#include <string>

namespace seediff {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor cannot be encoded (non-finite entry, bad rank).
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// The filesystem refused a read or write.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An ATNB byte stream is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A dump directory violates the dump invariants.
class DumpError : public Error {
 public:
  using Error::Error;
};

/// A map has no positive entry, so it cannot be max-normalized.
class DegenerateMapError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied arguments are inconsistent.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace seediff
