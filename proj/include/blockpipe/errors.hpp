#ifndef BLOCKPIPE_ERRORS_HPP_
#define BLOCKPIPE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace blockpipe {

// Error taxonomy. The CLI maps these onto exit codes: config errors -> 2,
// I/O errors -> 3, everything else that reaches main -> 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PartitionError : ConfigError {
  explicit PartitionError(const std::string& msg) : ConfigError(msg) {}
};

struct CacheError : std::runtime_error {
  explicit CacheError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchedulerError : std::runtime_error {
  explicit SchedulerError(const std::string& msg) : std::runtime_error(msg) {}
};

struct QueueError : std::runtime_error {
  explicit QueueError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SchedulingError : std::runtime_error {
  explicit SchedulingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace blockpipe

#endif  // BLOCKPIPE_ERRORS_HPP_
