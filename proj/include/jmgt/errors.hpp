#pragma once

#include <stdexcept>
#include <string>

namespace jmgt {

// Error taxonomy aligned with the CLI exit codes:
// DomainError (and subclasses)    -> exit 2 (validation)
// NumericalError (and subclasses) -> exit 3 (numerical)
class DomainError : public std::invalid_argument {
 public:
  explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public DomainError {
 public:
  explicit ConfigError(const std::string& msg) : DomainError(msg) {}
};

class UnsupportedConfigError : public DomainError {
 public:
  explicit UnsupportedConfigError(const std::string& msg) : DomainError(msg) {}
};

// 1 - 2*kappa*sigma*u dropped below the configured margin.
class DegeneracyError : public NumericalError {
 public:
  explicit DegeneracyError(const std::string& msg) : NumericalError(msg) {}
};

class InstabilityError : public NumericalError {
 public:
  explicit InstabilityError(const std::string& msg) : NumericalError(msg) {}
};

class NotSwitchedOffError : public NumericalError {
 public:
  explicit NotSwitchedOffError(const std::string& msg) : NumericalError(msg) {}
};

class DoublePoleError : public NumericalError {
 public:
  explicit DoublePoleError(const std::string& msg) : NumericalError(msg) {}
};

class SingularConversionError : public NumericalError {
 public:
  explicit SingularConversionError(const std::string& msg) : NumericalError(msg) {}
};

class EstimationError : public NumericalError {
 public:
  explicit EstimationError(const std::string& msg) : NumericalError(msg) {}
};

class InjectivityError : public NumericalError {
 public:
  explicit InjectivityError(const std::string& msg) : NumericalError(msg) {}
};

class ReconstructionDomainError : public NumericalError {
 public:
  explicit ReconstructionDomainError(const std::string& msg) : NumericalError(msg) {}
};

class OutsideLocalBallError : public NumericalError {
 public:
  explicit OutsideLocalBallError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace jmgt
