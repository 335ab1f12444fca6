#include "fieldkf/errors.hpp"

namespace fieldkf {

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::string out = "dataset invalid (" + std::to_string(issues.size()) + " issue(s))";
  for (const auto& issue : issues) out += "\n  - " + issue;
  return out;
}

}  // namespace

SingularMatrixError::SingularMatrixError(const std::string& msg, std::int64_t frequency_index)
    : Error(msg), frequency_index_(frequency_index) {}

DivergenceError::DivergenceError(const std::string& what, std::int64_t step, std::int64_t entry)
    : Error(what + " (step " + std::to_string(step) +
            (entry >= 0 ? ", state entry " + std::to_string(entry) : std::string(", covariance")) + ")"),
      step_(step),
      entry_(entry) {}

DatasetError::DatasetError(std::vector<std::string> issues)
    : Error(join_issues(issues)), issues_(std::move(issues)) {}

}  // namespace fieldkf
