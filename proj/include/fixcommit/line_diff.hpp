#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fixcommit {

enum class LineMarker { unchanged, buggy_only, fixed_only };

struct DiffLine {
  LineMarker marker;
  std::string text;
};

/// Line-level alignment of a buggy and a fixed text.
struct LineDiff {
  std::vector<DiffLine> lines;

  /// Joins UNCHANGED + BUGGY_ONLY lines; reproduces the buggy text exactly.
  std::string buggy_text() const;
  /// Joins UNCHANGED + FIXED_ONLY lines; reproduces the fixed text exactly.
  std::string fixed_text() const;
  std::size_t count(LineMarker marker) const;
};

/// Splits on '\n'. The empty text has no lines; a trailing newline yields a
/// final empty line, so join(split(t), "\n") == t for every t.
std::vector<std::string> split_lines(std::string_view text);
std::string join_lines(const std::vector<std::string>& lines);

/// LCS alignment over lines. Among all maximum-length matchings the one whose
/// (buggy index, fixed index) pair sequence is lexicographically smallest is
/// chosen. Within an unmatched gap, removed lines precede added lines.
LineDiff line_diff(std::string_view buggy, std::string_view fixed);

}  // namespace fixcommit
