#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace permk {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

enum class FailureKind {
  inadmissible,  // parameters violate a stated hypothesis
  structural,    // sign pattern or identity broken
  numerical,     // conditioning or round-off beyond tolerance
  domain,        // argument outside the operation's domain
  unsupported,
  usage,
};

inline const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::inadmissible: return "inadmissible";
    case FailureKind::structural: return "structural";
    case FailureKind::numerical: return "numerical";
    case FailureKind::domain: return "domain";
    case FailureKind::unsupported: return "unsupported";
    case FailureKind::usage: return "usage";
  }
  return "unknown";
}

// Every failure names the identity or hypothesis it violated via a stable key.
class Failure : public std::runtime_error {
 public:
  Failure(FailureKind kind, std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), kind_(kind), key_(std::move(key)), message_(message) {}

  FailureKind kind() const noexcept { return kind_; }
  const std::string& key() const noexcept { return key_; }
  const std::string& message() const noexcept { return message_; }

 private:
  FailureKind kind_;
  std::string key_;
  std::string message_;
};

// Entries {l+1, ..., l+n}, 1-based.
struct Window {
  std::size_t l = 0;
  std::size_t n = 1;

  std::size_t first() const { return l + 1; }
  std::size_t last() const { return l + n; }
};

namespace tol {
inline constexpr double closed_form = 1e-12;
inline constexpr double dense = 1e-10;
inline constexpr double truncated = 1e-6;
inline constexpr double sign = 1e-12;
inline constexpr double max_condition = 1e12;
inline constexpr double max_entry = 1e300;
}  // namespace tol

inline void require(bool ok, FailureKind kind, const char* key, const std::string& message) {
  if (!ok) throw Failure(kind, key, message);
}

}  // namespace permk
