#pragma once

#include <stdexcept>
#include <string>

namespace forge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// A loss over a batch with no unmasked positions.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes in a file format (WAV, checkpoint, manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A remote or mock client could not satisfy a request.
class ClientError : public Error {
 public:
  using Error::Error;
};

// A judge reply without a usable [[rating]].
class JudgeError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
