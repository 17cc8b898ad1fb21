#pragma once

#include <stdexcept>
#include <string>

namespace gridsynth {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Case text is not a well-formed MATPOWER case, or a parsed value violates a
// grid invariant.
class MalformedCase : public Error {
  public:
    using Error::Error;
};

class DanglingReference : public Error {
  public:
    using Error::Error;
};

class NoSlack : public Error {
  public:
    using Error::Error;
};

// Linear system could not be factored (DC power flow on a disconnected grid).
class SingularSystem : public Error {
  public:
    using Error::Error;
};

class BaseCaseInfeasible : public Error {
  public:
    using Error::Error;
};

class CombinatorialBlowup : public Error {
  public:
    using Error::Error;
};

class RejectionExhausted : public Error {
  public:
    using Error::Error;
};

class IoFailure : public Error {
  public:
    using Error::Error;
};

class DatasetCorrupt : public Error {
  public:
    using Error::Error;
};

// Configuration has one or more bad keys/values. `what()` lists all of them.
class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace gridsynth
