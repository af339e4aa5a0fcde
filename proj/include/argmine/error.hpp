#pragma once

#include <stdexcept>
#include <string>

namespace argmine {

// Exit-code class 1: the input is well-formed but violates a contract.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exit-code class 1: an input record could not be parsed.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exit-code class 2: filesystem and checkpoint failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : IoError {
  using IoError::IoError;
};

}  // namespace argmine
