#ifndef LOOPSPACE_ERROR_HPP
#define LOOPSPACE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace loopspace {

/// Precondition violated by an argument (bad range, mismatched spaces, ...).
class domain_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (file, table, JSON) violates a type invariant.
class validation_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A constructive procedure could not produce its object.
class construction_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Reconstruction exhausted its search space.
class not_found_error : public std::runtime_error {
public:
  not_found_error(const std::string &what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

private:
  double best_residual_;
};

} // namespace loopspace

#endif // LOOPSPACE_ERROR_HPP
