#include "semiipc/errors.hpp"

namespace semiipc {

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kFormat:
    case ErrorKind::kCorruption:
    case ErrorKind::kIo:
    case ErrorKind::kInput:
    case ErrorKind::kDegenerate:
      return 3;
    case ErrorKind::kLabel:
    case ErrorKind::kState:
    case ErrorKind::kProtocol:
      return 4;
  }
  return 1;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kDegenerate: return "degenerate input";
    case ErrorKind::kLabel: return "label error";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kProtocol: return "protocol violation";
  }
  return "error";
}

void raise(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace semiipc
