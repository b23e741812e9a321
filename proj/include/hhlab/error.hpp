#ifndef HHLAB_ERROR_HPP
#define HHLAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hhlab {

enum class ErrorCode {
  kInvalidArgument,
  kNotBipartite,
  kSelfLoop,
  kBasisMismatch,
  kA1Violated,
  kB2Violated,
  kNoConvergence,
  kNoRefinementConvergence,
  kConfigInvalid,
  kBudgetExceeded,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNotBipartite: return "NotBipartite";
    case ErrorCode::kSelfLoop: return "SelfLoop";
    case ErrorCode::kBasisMismatch: return "BasisMismatch";
    case ErrorCode::kA1Violated: return "A1Violated";
    case ErrorCode::kB2Violated: return "B2Violated";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNoRefinementConvergence: return "NoRefinementConvergence";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace hhlab

#endif  // HHLAB_ERROR_HPP
