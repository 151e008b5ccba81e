#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fednilm {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
  config = 2,    // bad config file, bad flags, invalid architecture
  data = 3,      // ingestion, dataset, metric-input failures
  protocol = 4,  // wire-format violations
  training = 5,  // aborted federation / training run
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(std::string msg) : Error(ErrorKind::config, std::move(msg)) {}
};

struct DataError : Error {
  explicit DataError(std::string msg) : Error(ErrorKind::data, std::move(msg)) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(std::string msg) : Error(ErrorKind::protocol, std::move(msg)) {}
};

struct TrainingError : Error {
  explicit TrainingError(std::string msg) : Error(ErrorKind::training, std::move(msg)) {}
};

}  // namespace fednilm
