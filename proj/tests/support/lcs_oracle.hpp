#pragma once

// Exhaustive LCS oracle: enumerates every strictly increasing matching of
// equal lines by depth-first search in lexicographic order of (i, j) pairs.
// The first matching reaching a new maximum length is therefore the
// lexicographically smallest optimal one. No dynamic programming involved.

#include <string>
#include <utility>
#include <vector>

#include "fixcommit/line_diff.hpp"

namespace fixcommit::testing {

inline std::vector<std::pair<std::size_t, std::size_t>> best_matching_by_enumeration(
    const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::pair<std::size_t, std::size_t>> current, best;
  auto dfs = [&](auto&& self, std::size_t i0, std::size_t j0) -> void {
    if (current.size() > best.size()) best = current;
    for (std::size_t i = i0; i < a.size(); ++i)
      for (std::size_t j = j0; j < b.size(); ++j) {
        if (a[i] != b[j]) continue;
        // cannot beat the best from here: skip
        const std::size_t room = std::min(a.size() - i, b.size() - j);
        if (current.size() + room <= best.size()) continue;
        current.emplace_back(i, j);
        self(self, i + 1, j + 1);
        current.pop_back();
      }
  };
  dfs(dfs, 0, 0);
  return best;
}

inline std::vector<LineMarker> oracle_markers(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto matching = best_matching_by_enumeration(a, b);
  std::vector<LineMarker> out;
  std::size_t i = 0, j = 0;
  auto gap = [&](std::size_t i1, std::size_t j1) {
    for (; i < i1; ++i) out.push_back(LineMarker::buggy_only);
    for (; j < j1; ++j) out.push_back(LineMarker::fixed_only);
  };
  for (const auto& [mi, mj] : matching) {
    gap(mi, mj);
    out.push_back(LineMarker::unchanged);
    ++i;
    ++j;
  }
  gap(a.size(), b.size());
  return out;
}

}  // namespace fixcommit::testing
