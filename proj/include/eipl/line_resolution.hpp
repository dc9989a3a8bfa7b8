#pragma once

#include <set>
#include <string_view>
#include <vector>

#include "eipl/text.hpp"

namespace eipl {

struct LineResolution {
  std::set<int> lines;
  bool verified = false;
};

/// Maps a (possibly multi-line) code string back onto snippet line indices.
/// Each non-empty line is matched on normalized text. When several snippet
/// lines share the same normalized text, the earliest one not already used by
/// this group is taken. `verified` is true iff every non-empty line matched.
inline LineResolution resolve_code_lines(std::string_view code_text,
                                         const CodeSnippet& snippet) {
  LineResolution out;
  std::vector<bool> consumed(static_cast<std::size_t>(snippet.line_count()), false);
  bool all_matched = true;
  bool any_line = false;

  std::size_t start = 0;
  while (start <= code_text.size()) {
    auto nl = code_text.find('\n', start);
    auto piece = code_text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                      : nl - start);
    const std::string wanted = normalize_line(piece);
    if (!wanted.empty()) {
      any_line = true;
      bool matched = false;
      for (int i = 1; i <= snippet.line_count(); ++i) {
        if (!consumed[i - 1] && snippet.normalized(i) == wanted) {
          consumed[i - 1] = true;
          out.lines.insert(i);
          matched = true;
          break;
        }
      }
      all_matched = all_matched && matched;
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  out.verified = any_line && all_matched;
  return out;
}

}  // namespace eipl
