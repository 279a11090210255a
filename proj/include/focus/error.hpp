#pragma once

#include <stdexcept>
#include <string>

namespace focus {

// Malformed or inconsistent inputs (files, configs, vocabularies).
// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or degenerate numerics discovered while computing.
// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kVerifyFailed = 1;
inline constexpr int kInputError = 2;
inline constexpr int kNumericalError = 3;
}  // namespace exit_code

}  // namespace focus
