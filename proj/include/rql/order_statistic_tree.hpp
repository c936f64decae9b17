#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rql/random.hpp"

namespace rql {

/**
 * Multiset of doubles supporting O(log n) insertion, k-th order statistic,
 * rank counts and range sums. Implemented as a treap over an index pool with
 * deterministic priorities, so identical insertion sequences give identical trees.
 *
 * Sums are kept relative to an offset fixed at the first insertion. For a constant
 * sequence every shifted value is exactly zero.
 */
class OrderStatisticTree {
 public:
  void insert(double key) {
    if (nodes_.empty()) offset_ = key;
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    const double shifted = key - offset_;
    nodes_.push_back(Node{key, shifted, splitmix64(id + 0x5bd1e995ULL), kNil, kNil, 1, shifted});
    auto [left, right] = split(root_, key);
    root_ = merge(merge(left, id), right);
  }

  std::size_t size() const { return root_ == kNil ? 0 : nodes_[root_].size; }
  bool empty() const { return size() == 0; }
  double offset() const { return offset_; }

  /// k-th smallest element, 1-based.
  double kth(std::size_t k) const {
    if (k == 0 || k > size()) throw std::out_of_range("OrderStatisticTree::kth: rank out of range");
    std::uint32_t t = root_;
    for (;;) {
      const std::size_t left = size_of(nodes_[t].left);
      if (k <= left) {
        t = nodes_[t].left;
      } else if (k == left + 1) {
        return nodes_[t].key;
      } else {
        k -= left + 1;
        t = nodes_[t].right;
      }
    }
  }

  /// Number of elements strictly below `lo`.
  std::size_t count_below(double lo) const {
    std::size_t count = 0;
    for (std::uint32_t t = root_; t != kNil;) {
      if (nodes_[t].key < lo) {
        count += size_of(nodes_[t].left) + 1;
        t = nodes_[t].right;
      } else {
        t = nodes_[t].left;
      }
    }
    return count;
  }

  /// Number of elements strictly above `hi`.
  std::size_t count_above(double hi) const {
    std::size_t count = 0;
    for (std::uint32_t t = root_; t != kNil;) {
      if (nodes_[t].key > hi) {
        count += size_of(nodes_[t].right) + 1;
        t = nodes_[t].left;
      } else {
        t = nodes_[t].right;
      }
    }
    return count;
  }

  /**
   * Sum of (x - offset()) over elements x in [lo, hi]. Only subtrees lying wholly
   * inside the range are added, so values outside it never enter the sum.
   */
  double shifted_sum_between(double lo, double hi) const {
    std::uint32_t t = root_;
    // Descend to the first node inside the range; it splits the query in two.
    while (t != kNil) {
      if (nodes_[t].key < lo) t = nodes_[t].right;
      else if (nodes_[t].key > hi) t = nodes_[t].left;
      else break;
    }
    if (t == kNil) return 0.0;
    double total = nodes_[t].shifted;
    // Left spine: everything >= lo.
    for (std::uint32_t u = nodes_[t].left; u != kNil;) {
      if (nodes_[u].key >= lo) {
        total += nodes_[u].shifted + sum_of(nodes_[u].right);
        u = nodes_[u].left;
      } else {
        u = nodes_[u].right;
      }
    }
    // Right spine: everything <= hi.
    for (std::uint32_t u = nodes_[t].right; u != kNil;) {
      if (nodes_[u].key <= hi) {
        total += nodes_[u].shifted + sum_of(nodes_[u].left);
        u = nodes_[u].right;
      } else {
        u = nodes_[u].left;
      }
    }
    return total;
  }

 private:
  static constexpr std::uint32_t kNil = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    double key;
    double shifted;  // key - offset_
    std::uint64_t priority;
    std::uint32_t left;
    std::uint32_t right;
    std::uint32_t size;
    double sum;  // subtree sum of shifted keys
  };

  std::size_t size_of(std::uint32_t t) const { return t == kNil ? 0 : nodes_[t].size; }
  double sum_of(std::uint32_t t) const { return t == kNil ? 0.0 : nodes_[t].sum; }

  void pull(std::uint32_t t) {
    Node& n = nodes_[t];
    n.size = static_cast<std::uint32_t>(1 + size_of(n.left) + size_of(n.right));
    n.sum = sum_of(n.left) + n.shifted + sum_of(n.right);
  }

  // Splits into (keys < key, keys >= key).
  std::pair<std::uint32_t, std::uint32_t> split(std::uint32_t t, double key) {
    if (t == kNil) return {kNil, kNil};
    if (nodes_[t].key < key) {
      auto [l, r] = split(nodes_[t].right, key);
      nodes_[t].right = l;
      pull(t);
      return {t, r};
    }
    auto [l, r] = split(nodes_[t].left, key);
    nodes_[t].left = r;
    pull(t);
    return {l, t};
  }

  std::uint32_t merge(std::uint32_t a, std::uint32_t b) {
    if (a == kNil) return b;
    if (b == kNil) return a;
    if (nodes_[a].priority > nodes_[b].priority) {
      nodes_[a].right = merge(nodes_[a].right, b);
      pull(a);
      return a;
    }
    nodes_[b].left = merge(a, nodes_[b].left);
    pull(b);
    return b;
  }

  std::vector<Node> nodes_;
  std::uint32_t root_ = kNil;
  double offset_ = 0.0;
};

}  // namespace rql
