// moscope/error.h

#ifndef MOSCOPE_ERROR_H_
#define MOSCOPE_ERROR_H_

#include <stdexcept>
#include <string>

namespace moscope {

// Base class for every error raised by the library. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file: bad magic, truncated payload, bad CSV.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Semantic problem with otherwise well-formed data (range, duplicates,
// non-finite values, empty sets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor or feature shapes that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Too few groups or samples for a statistic to exist.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace moscope

#endif  // MOSCOPE_ERROR_H_
