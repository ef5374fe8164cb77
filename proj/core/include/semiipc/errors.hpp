#pragma once

#include <stdexcept>
#include <string>

namespace semiipc {

enum class ErrorKind {
  kUsage,       // bad command line or empty/oversized grid
  kConfig,      // invalid configuration values or incompatible split plan
  kFormat,      // file is not a PCE1 file
  kCorruption,  // PCE1 file is truncated or internally inconsistent
  kIo,          // filesystem failure
  kInput,       // numerically invalid input data
  kDegenerate,  // input valid but the requested statistic is undefined
  kLabel,       // class id not known to the prototype set
  kState,       // operation invoked on an object in the wrong state
  kProtocol,    // incremental-learning protocol violated
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code used by the CLI: 2 usage, 3 data/format, 4 protocol.
int exit_code(ErrorKind kind) noexcept;

const char* to_string(ErrorKind kind) noexcept;

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

}  // namespace semiipc
