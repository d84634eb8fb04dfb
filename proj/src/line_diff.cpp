#include "fixcommit/line_diff.hpp"

#include <algorithm>

namespace fixcommit {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  if (text.empty()) return lines;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

std::string LineDiff::buggy_text() const {
  std::vector<std::string> kept;
  for (const auto& l : lines)
    if (l.marker != LineMarker::fixed_only) kept.push_back(l.text);
  return join_lines(kept);
}

std::string LineDiff::fixed_text() const {
  std::vector<std::string> kept;
  for (const auto& l : lines)
    if (l.marker != LineMarker::buggy_only) kept.push_back(l.text);
  return join_lines(kept);
}

std::size_t LineDiff::count(LineMarker marker) const {
  return static_cast<std::size_t>(
      std::count_if(lines.begin(), lines.end(), [marker](const DiffLine& l) { return l.marker == marker; }));
}

LineDiff line_diff(std::string_view buggy, std::string_view fixed) {
  const auto a = split_lines(buggy);
  const auto b = split_lines(fixed);
  const std::size_t n = a.size(), m = b.size();

  // suffix[i][j] = LCS length of a[i..] and b[j..]
  std::vector<std::vector<std::size_t>> suffix(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      suffix[i][j] = a[i] == b[j] ? suffix[i + 1][j + 1] + 1 : std::max(suffix[i + 1][j], suffix[i][j + 1]);

  LineDiff diff;
  auto emit_gap = [&](std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
    for (std::size_t i = i0; i < i1; ++i) diff.lines.push_back({LineMarker::buggy_only, a[i]});
    for (std::size_t j = j0; j < j1; ++j) diff.lines.push_back({LineMarker::fixed_only, b[j]});
  };

  std::size_t i = 0, j = 0;
  while (suffix[i][j] > 0) {
    const std::size_t need = suffix[i][j];
    // earliest buggy line, then earliest fixed line, that starts an optimal matching
    bool found = false;
    for (std::size_t ii = i; ii < n && !found; ++ii) {
      if (suffix[ii][j] < need) break;
      for (std::size_t jj = j; jj < m; ++jj) {
        if (suffix[ii][jj] < need) break;
        if (a[ii] == b[jj] && suffix[ii + 1][jj + 1] == need - 1) {
          emit_gap(i, ii, j, jj);
          diff.lines.push_back({LineMarker::unchanged, a[ii]});
          i = ii + 1;
          j = jj + 1;
          found = true;
          break;
        }
      }
    }
  }
  emit_gap(i, n, j, m);
  return diff;
}

}  // namespace fixcommit
