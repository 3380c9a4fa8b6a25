#pragma once

#include <stdexcept>
#include <string>

namespace msnn {

// Error categories map onto the process exit codes used by the CLI:
// config -> 2, everything data-shaped (data/shape/io) -> 3.
enum class ErrorCode {
    config,
    data,
    shape,
    io,
    internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorCode::config, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorCode::data, msg); }
inline Error shape_error(const std::string& msg) { return Error(ErrorCode::shape, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorCode::io, msg); }

}  // namespace msnn
