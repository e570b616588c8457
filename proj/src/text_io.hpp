#pragma once

// Small helpers shared by the text file formats.

#include <charconv>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "sodm/error.hpp"

namespace sodm::detail {

/// Shortest decimal representation that round-trips exactly.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Line reader that remembers file name and line number for error messages.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path);
  }

  /// Next non-empty line, split on whitespace; false at end of file.
  bool next(std::vector<std::string_view>& tokens) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      tokens = split_ws(line_);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::vector<std::string_view> expect(std::string_view what) {
    std::vector<std::string_view> tokens;
    if (!next(tokens)) fail("unexpected end of file, expected " + std::string(what));
    return tokens;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  template <typename T>
  T parse(std::string_view token) const {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      fail("bad numeric token '" + std::string(token) + "'");
    }
    return value;
  }

  /// Checks the leading keyword and the token count (including the keyword).
  void require(const std::vector<std::string_view>& tokens, std::string_view keyword,
               std::size_t count) const {
    if (tokens[0] != keyword) {
      fail("expected '" + std::string(keyword) + "', got '" + std::string(tokens[0]) + "'");
    }
    if (tokens.size() != count) {
      fail("'" + std::string(keyword) + "' expects " + std::to_string(count - 1) + " values, got " +
           std::to_string(tokens.size() - 1));
    }
  }

  std::size_t line_number() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace sodm::detail
