#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stemper {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A potential or gradient evaluated to inf/nan. Carries the mixture
/// component responsible, or -1 when it is not attributable to one.
class NonFiniteInput : public Error {
 public:
  NonFiniteInput(const std::string& what, int component = -1)
      : Error(what), component_(component) {}
  int component() const { return component_; }

 private:
  int component_;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class InsufficientSamples : public Error {
 public:
  InsufficientSamples(std::size_t got, std::size_t needed)
      : Error("insufficient samples: got " + std::to_string(got) + ", need at least " +
              std::to_string(needed)),
        got_(got),
        needed_(needed) {}
  std::size_t got() const { return got_; }
  std::size_t needed() const { return needed_; }

 private:
  std::size_t got_;
  std::size_t needed_;
};

class InvalidChain : public Error {
 public:
  using Error::Error;
};

class InvalidPartition : public Error {
 public:
  using Error::Error;
};

class InvalidProposal : public Error {
 public:
  using Error::Error;
};

class SizeLimit : public Error {
 public:
  using Error::Error;
};

}  // namespace stemper
