#pragma once

// Single classification tree induction on pre-binned features. Split out of
// the forest so the row-order invariance of tree growth can be tested.

#include <cstdint>
#include <span>
#include <vector>

#include "cfade/learners.hpp"
#include "cfade/rng.hpp"

namespace cfade::detail {

inline constexpr int kMaxBins = 256;

/// Features quantized to at most kMaxBins ordered codes per column, with the
/// real-valued threshold separating each pair of adjacent bins.
class BinnedFeatures {
 public:
  explicit BinnedFeatures(const FeatureMatrix& x);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  int bins(std::size_t feature) const { return static_cast<int>(thresholds_[feature].size()) + 1; }
  std::uint8_t code(std::size_t row, std::size_t feature) const {
    return codes_[feature * rows_ + row];
  }
  /// Split value between bin b and bin b + 1.
  double threshold(std::size_t feature, int b) const { return thresholds_[feature][b]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> codes_;  // column-major
  std::vector<std::vector<double>> thresholds_;
};

/// Grows one tree on the multiset of training rows `in_bag` (indices into
/// `features`, duplicates allowed). Candidate features per split are drawn
/// from `rng`; the result depends only on the multiset, not its order.
DecisionTree grow_tree(const BinnedFeatures& features, std::span<const int> labels,
                       std::vector<std::uint32_t> in_bag, const ForestOptions& options, Rng& rng);

}  // namespace cfade::detail
