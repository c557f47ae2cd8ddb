#pragma once

#include <optional>
#include <span>

namespace cfade {

/// Conditional outcome risks for one admission: mu0 = E(Y | A=0, X=x),
/// mu1 = E(Y | A=1, X=x).
struct MuPair {
  double mu0 = 0.0;
  double mu1 = 0.0;
};

/// Risk contrast between the alternative (risk0) and vancomycin (risk1)
/// arms. Used both for averages over the treated and for single admissions.
struct EffectEstimate {
  double risk0 = 0.0;
  double risk1 = 0.0;

  static EffectEstimate from_mu(const MuPair& mu) { return {mu.mu0, mu.mu1}; }

  /// Absolute risk difference.
  double ard() const { return risk1 - risk0; }
  /// Risk ratio; nullopt when risk0 == 0.
  std::optional<double> rr() const {
    if (risk0 == 0.0) return std::nullopt;
    return risk1 / risk0;
  }
  /// Excess risk ratio 1 - risk0/risk1; nullopt when risk1 == 0.
  std::optional<double> err() const {
    if (risk1 == 0.0) return std::nullopt;
    return 1.0 - risk0 / risk1;
  }
  /// max(0, ERR); nullopt when ERR is undefined.
  std::optional<double> pc_low() const {
    const auto e = err();
    if (!e) return std::nullopt;
    return *e > 0.0 ? *e : 0.0;
  }
};

/// Means of mu0 and mu1 over the given admissions. Caller selects the
/// treated subset. Throws ValidationError on an empty span.
EffectEstimate average_effect(std::span<const MuPair> mus);

}  // namespace cfade
