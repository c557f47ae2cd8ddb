#include "cfade/tree_builder.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace cfade::detail {

BinnedFeatures::BinnedFeatures(const FeatureMatrix& x)
    : rows_(x.rows()), cols_(x.cols()), codes_(rows_ * cols_), thresholds_(cols_) {
  std::vector<double> column(rows_);
  for (std::size_t j = 0; j < cols_; ++j) {
    for (std::size_t i = 0; i < rows_; ++i)
      column[i] = x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    // Upper edges of each bin (inclusive). Exact when few distinct values,
    // otherwise equal-frequency cut points on the observed values.
    std::vector<double> upper;
    if (unique.size() <= static_cast<std::size_t>(kMaxBins)) {
      upper = unique;
    } else {
      for (int b = 1; b < kMaxBins; ++b) {
        const std::size_t pos = (sorted.size() * static_cast<std::size_t>(b)) / kMaxBins;
        const double edge = sorted[std::min(pos, sorted.size() - 1)];
        if (upper.empty() || edge > upper.back()) upper.push_back(edge);
      }
      if (upper.back() < unique.back()) upper.push_back(unique.back());
    }
    // Threshold between bin b and b+1: midpoint of the largest value in bin b
    // and the smallest value above it.
    auto& th = thresholds_[j];
    th.reserve(upper.size() - 1);
    for (std::size_t b = 0; b + 1 < upper.size(); ++b) {
      const double next = *std::upper_bound(unique.begin(), unique.end(), upper[b]);
      th.push_back(upper[b] + 0.5 * (next - upper[b]));
    }
    for (std::size_t i = 0; i < rows_; ++i) {
      const auto it = std::lower_bound(upper.begin(), upper.end(), column[i]);
      codes_[j * rows_ + i] = static_cast<std::uint8_t>(it - upper.begin());
    }
  }
}

namespace {

struct Split {
  int feature = -1;
  int bin = -1;
  double score = 0.0;
};

// Gini gain is equivalent to maximising sum over children of
// (pos^2 + neg^2) / n.
inline double child_score(double pos, double total) {
  const double neg = total - pos;
  return (pos * pos + neg * neg) / total;
}

struct Builder {
  const BinnedFeatures& features;
  std::span<const int> labels;
  const ForestOptions& options;
  Rng& rng;
  std::vector<std::uint32_t> rows;
  std::vector<int> candidates;
  std::array<std::uint32_t, kMaxBins> bin_count{};
  std::array<std::uint32_t, kMaxBins> bin_pos{};
  std::vector<std::pair<std::uint8_t, int>> scratch;

  void best_split_for(int f, std::size_t begin, std::size_t end, double total, double pos,
                      Split& best) {
    const auto feature = static_cast<std::size_t>(f);
    const int n_bins = features.bins(feature);
    if (n_bins < 2) return;
    const std::size_t m = end - begin;
    const auto min_leaf = static_cast<double>(options.min_leaf);

    auto consider = [&](double left_n, double left_pos, int bin) {
      const double right_n = total - left_n;
      if (left_n < min_leaf || right_n < min_leaf) return;
      const double s = child_score(left_pos, left_n) + child_score(pos - left_pos, right_n);
      if (s > best.score + 1e-12) best = {f, bin, s};
    };

    if (m * 4 < static_cast<std::size_t>(n_bins)) {
      scratch.clear();
      for (std::size_t k = begin; k < end; ++k)
        scratch.emplace_back(features.code(rows[k], feature), labels[rows[k]]);
      std::sort(scratch.begin(), scratch.end());
      double left_n = 0.0, left_pos = 0.0;
      for (std::size_t k = 0; k + 1 < scratch.size(); ++k) {
        left_n += 1.0;
        left_pos += scratch[k].second;
        if (scratch[k].first != scratch[k + 1].first) consider(left_n, left_pos, scratch[k].first);
      }
      return;
    }

    std::fill_n(bin_count.begin(), n_bins, 0u);
    std::fill_n(bin_pos.begin(), n_bins, 0u);
    for (std::size_t k = begin; k < end; ++k) {
      const auto r = rows[k];
      const auto c = features.code(r, feature);
      ++bin_count[c];
      bin_pos[c] += static_cast<std::uint32_t>(labels[r]);
    }
    double left_n = 0.0, left_pos = 0.0;
    for (int b = 0; b + 1 < n_bins; ++b) {
      if (bin_count[b] == 0) continue;
      left_n += bin_count[b];
      left_pos += bin_pos[b];
      if (left_n >= total) break;
      consider(left_n, left_pos, b);
    }
  }

  DecisionTree build() {
    DecisionTree tree;
    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, rows.size(), 0});
    candidates.resize(features.cols());

    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      const std::size_t m = job.end - job.begin;
      double pos = 0.0;
      for (std::size_t k = job.begin; k < job.end; ++k) pos += labels[rows[k]];
      const double total = static_cast<double>(m);
      tree.nodes[static_cast<std::size_t>(job.node)].value = pos / total;

      const bool pure = pos == 0.0 || pos == total;
      const bool too_small = m < 2 * static_cast<std::size_t>(options.min_leaf);
      const bool too_deep = options.max_depth > 0 && job.depth >= options.max_depth;
      if (pure || too_small || too_deep || features.cols() == 0) continue;

      // Partial Fisher-Yates: first mtry entries are the candidate features.
      std::iota(candidates.begin(), candidates.end(), 0);
      const auto mtry = std::min<std::size_t>(static_cast<std::size_t>(options.mtry), candidates.size());
      Split best;
      best.score = child_score(pos, total);
      for (std::size_t c = 0; c < mtry; ++c) {
        const std::size_t pick = c + uniform_index(rng, candidates.size() - c);
        std::swap(candidates[c], candidates[pick]);
        best_split_for(candidates[c], job.begin, job.end, total, pos, best);
      }
      if (best.feature < 0) continue;

      const auto f = static_cast<std::size_t>(best.feature);
      const auto mid = std::partition(
          rows.begin() + static_cast<std::ptrdiff_t>(job.begin),
          rows.begin() + static_cast<std::ptrdiff_t>(job.end),
          [&](std::uint32_t r) { return features.code(r, f) <= best.bin; });
      const auto split_at = static_cast<std::size_t>(mid - rows.begin());

      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = best.feature;
      node.threshold = features.threshold(f, best.bin);
      node.left = left;
      node.right = left + 1;
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({left + 1, split_at, job.end, job.depth + 1});
      stack.push_back({left, job.begin, split_at, job.depth + 1});
    }
    return tree;
  }
};

}  // namespace

DecisionTree grow_tree(const BinnedFeatures& features, std::span<const int> labels,
                       std::vector<std::uint32_t> in_bag, const ForestOptions& options, Rng& rng) {
  Builder builder{features, labels, options, rng, std::move(in_bag), {}, {}, {}, {}};
  return builder.build();
}

}  // namespace cfade::detail
