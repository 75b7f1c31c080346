#pragma once

#include <stdexcept>
#include <string>

namespace gradchain {

// Base of every error thrown by the library. Rejections of blocks during
// verification are reported as values, not exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Overflow or non-finite intermediate. Carries the offending block when known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, int block = -1)
      : Error(what), block_(block) {}
  int block() const { return block_; }

 private:
  int block_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

// The convexity certificate's rank precondition does not hold; distinct from
// the certificate evaluating to false.
class CertificateInapplicable : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int round)
      : Error(what), round_(round) {}
  int round() const { return round_; }

 private:
  int round_;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Unreadable or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

class TransactionError : public Error {
 public:
  using Error::Error;
};

}  // namespace gradchain
