#pragma once

// Line handling and explanation-text matching shared by every stage.

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace eipl {

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_ascii_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace detail

/// Strips leading/trailing whitespace and collapses interior runs to one space.
/// Case is preserved.
inline std::string normalize_line(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (detail::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && detail::is_space(text[b])) ++b;
  while (e > b && detail::is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

/// True for lines like "}", "};" or ")" that carry no statement of their own.
inline bool is_punctuation_only(std::string_view line) {
  bool any = false;
  for (char c : line) {
    if (detail::is_space(c)) continue;
    if (!detail::is_ascii_punct(c)) return false;
    any = true;
  }
  return any;
}

/// Blank and punctuation-only lines are not counted as substantive.
inline bool is_substantive(std::string_view line) {
  return !normalize_line(line).empty() && !is_punctuation_only(line);
}

struct CodeLine {
  int index = 0;  // 1-based
  std::string text;
};

class CodeSnippet {
 public:
  CodeSnippet() = default;

  const std::string& raw() const { return raw_; }
  const std::vector<CodeLine>& lines() const { return lines_; }
  const std::vector<std::string>& normalized_lines() const { return normalized_; }
  int line_count() const { return static_cast<int>(lines_.size()); }

  bool contains(int index) const { return index >= 1 && index <= line_count(); }

  /// Text of line `index` (1-based). Precondition: contains(index).
  const std::string& line(int index) const { return lines_[index - 1].text; }
  const std::string& normalized(int index) const { return normalized_[index - 1]; }

  int substantive_line_count() const {
    int n = 0;
    for (const auto& l : lines_) n += is_substantive(l.text) ? 1 : 0;
    return n;
  }

  /// Lines joined with '\n'; equals raw() up to one trailing newline.
  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      if (i) out.push_back('\n');
      out += lines_[i].text;
    }
    return out;
  }

 private:
  friend CodeSnippet split_lines(std::string_view code);

  std::string raw_;
  std::vector<CodeLine> lines_;
  std::vector<std::string> normalized_;
};

/// Splits on '\n'. Blank lines keep their index; a single trailing newline
/// does not open a new line. Any '\r' stays in the line text.
inline CodeSnippet split_lines(std::string_view code) {
  CodeSnippet s;
  s.raw_ = std::string(code);
  if (code.empty()) return s;
  std::size_t start = 0;
  int index = 1;
  while (start <= code.size()) {
    auto nl = code.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < code.size()) {
        s.lines_.push_back({index, std::string(code.substr(start))});
      }
      break;
    }
    s.lines_.push_back({index++, std::string(code.substr(start, nl - start))});
    start = nl + 1;
    if (start == code.size()) break;
  }
  s.normalized_.reserve(s.lines_.size());
  for (const auto& l : s.lines_) s.normalized_.push_back(normalize_line(l.text));
  return s;
}

/// Byte span [begin, end) into an explanation.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TextSpan&) const = default;
};

/// Portion text as it is compared: normalized, surrounding punctuation
/// trimmed, ASCII-lowercased.
inline std::string portion_key(std::string_view portion) {
  std::string p = normalize_line(portion);
  std::size_t b = 0;
  std::size_t e = p.size();
  while (b < e && (detail::is_ascii_punct(p[b]) || detail::is_space(p[b]))) ++b;
  while (e > b && (detail::is_ascii_punct(p[e - 1]) || detail::is_space(p[e - 1]))) --e;
  p = p.substr(b, e - b);
  for (auto& c : p) c = detail::ascii_lower(c);
  return p;
}

/// Finds the first occurrence of `portion` inside `text` under the
/// case/whitespace-insensitive comparison and maps it back to original bytes.
inline std::optional<TextSpan> locate_portion(std::string_view portion,
                                              std::string_view text) {
  const std::string key = portion_key(portion);
  if (key.empty()) return std::nullopt;

  std::string folded;
  std::vector<std::size_t> origin;
  folded.reserve(text.size());
  origin.reserve(text.size());
  bool pending_space = false;
  std::size_t space_at = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (detail::is_space(c)) {
      if (!pending_space && !folded.empty()) space_at = i;
      pending_space = !folded.empty();
      continue;
    }
    if (pending_space) {
      folded.push_back(' ');
      origin.push_back(space_at);
      pending_space = false;
    }
    folded.push_back(detail::ascii_lower(c));
    origin.push_back(i);
  }

  auto at = folded.find(key);
  if (at == std::string::npos) return std::nullopt;
  return TextSpan{origin[at], origin[at + key.size() - 1] + 1};
}

/// True iff the portion occurs contiguously in the response, ignoring case,
/// whitespace layout, and punctuation at the portion's ends.
inline bool verify_portion(std::string_view portion, std::string_view response_text) {
  return locate_portion(portion, response_text).has_value();
}

/// Converts a UTF-8 byte offset into a UTF-16 code-unit offset, which is how
/// browsers index strings.
inline std::size_t utf16_offset(std::string_view text, std::size_t byte_offset) {
  std::size_t units = 0;
  std::size_t i = 0;
  while (i < byte_offset && i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    units += (len == 4) ? 2 : 1;
    i += len;
  }
  return units;
}

}  // namespace eipl
