#include "curvlab/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "curvlab/error.hpp"

namespace curvlab {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc())
    throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (in.eof()) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

void CsvBuilder::comment(std::string_view text) {
  out_ += "# ";
  out_ += text;
  out_ += '\n';
}

void CsvBuilder::comment(std::string_view key, std::string_view value) {
  out_ += "# ";
  out_ += key;
  out_ += '=';
  out_ += value;
  out_ += '\n';
}

void CsvBuilder::comment(std::string_view key, double value) {
  comment(key, std::string_view(format_double(value)));
}

void CsvBuilder::comment(std::string_view key, std::int64_t value) {
  comment(key, std::string_view(std::to_string(value)));
}

void CsvBuilder::append_cell(const std::string& s, bool first) {
  if (!first) out_ += ',';
  out_ += s;
}

}  // namespace curvlab
