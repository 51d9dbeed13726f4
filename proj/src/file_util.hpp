#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stylerank/error.hpp"

namespace stylerank::detail {

inline std::ifstream open_input(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? (std::ios::binary | std::ios::trunc) : std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  auto in = open_input(path, true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stylerank::detail
