#pragma once

#include <stdexcept>
#include <string>

namespace dualfete {

// Raised when a caller breaks an operation's precondition (shape mismatch,
// out-of-range argument, mismatched parameter sets).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised by the trainer when a loss term stops being finite.
class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::string term)
      : std::runtime_error("non-finite value in loss term '" + term + "'"), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

// Malformed configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {
[[noreturn]] void throw_contract(const std::string& msg);
}

#define DUALFETE_REQUIRE(cond, msg)                       \
  do {                                                    \
    if (!(cond)) ::dualfete::detail::throw_contract(msg); \
  } while (false)

}  // namespace dualfete
