#pragma once

#include <stdexcept>
#include <string>

namespace dkf {

// Root of every error the library throws.  Callers that only care about
// "the input was bad" can catch this; the CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed textual or binary input (y4m header, CSV row, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that this codec deliberately does not handle.
class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bitstream header is not ours (magic/version) or the payload decodes to
// something impossible.
class FormatError : public Error {
 public:
  using Error::Error;
};

// The range decoder ran out of bytes.
class TruncatedStream : public FormatError {
 public:
  using FormatError::FormatError;
};

// Two RD curves share no metric interval.
class NoOverlapError : public Error {
 public:
  using Error::Error;
};

// Internal misuse: a precondition of a library function was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

}  // namespace dkf
