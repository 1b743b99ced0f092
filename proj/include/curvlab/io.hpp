#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace curvlab {

/// Shortest decimal string that round-trips the exact double. Used for all
/// CSV output so that reruns are byte-identical.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a over file bytes; manifest content hashes.
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Line-oriented CSV assembly. Cells are joined with ','; `#` lines carry
/// metadata. The writer never localizes or pads numbers.
class CsvBuilder {
 public:
  void comment(std::string_view text);
  void comment(std::string_view key, std::string_view value);
  void comment(std::string_view key, double value);
  void comment(std::string_view key, std::int64_t value);

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((append_cell(cells, first), first = false), ...);
    out_ += '\n';
  }

  /// Raw pre-joined line (matrix-style output).
  void line(std::string_view text) {
    out_ += text;
    out_ += '\n';
  }

  const std::string& str() const { return out_; }

 private:
  void append_cell(const std::string& s, bool first);
  void append_cell(const char* s, bool first) { append_cell(std::string(s), first); }
  void append_cell(std::string_view s, bool first) { append_cell(std::string(s), first); }
  void append_cell(double v, bool first) { append_cell(format_double(v), first); }
  void append_cell(int v, bool first) { append_cell(std::to_string(v), first); }
  void append_cell(std::int64_t v, bool first) { append_cell(std::to_string(v), first); }
  void append_cell(std::uint64_t v, bool first) { append_cell(std::to_string(v), first); }

  std::string out_;
};

}  // namespace curvlab
