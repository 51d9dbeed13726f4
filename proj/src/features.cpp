#include "stylerank/features.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "binary_io.hpp"
#include "file_util.hpp"
#include "json.hpp"
#include "stylerank/error.hpp"

namespace stylerank {

namespace {
constexpr std::string_view kMagic = "STYF";
}

void FeatureTable::add(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw Error(ErrorCode::InvalidArgument, "feature width " + std::to_string(values.size()) +
                                                " does not match table width " +
                                                std::to_string(dim_) + " for " + id);
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite feature for " + id);
  }
  if (index_.contains(id)) throw Error(ErrorCode::Duplicate, "duplicate feature id " + id);
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
}

std::optional<std::size_t> FeatureTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> FeatureTable::at(std::string_view id) const {
  auto row_index = find(id);
  if (!row_index) throw Error(ErrorCode::NotFound, "no feature vector for image " + std::string(id));
  return row(*row_index);
}

void FeatureTable::write_binary(std::ostream& out) const {
  io::write_magic(out, kMagic);
  io::write_le<std::uint32_t>(out, kBinaryVersion);
  io::write_le<std::uint64_t>(out, ids_.size());
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    io::write_short_string(out, ids_[r]);
    for (float v : row(r)) io::write_le<float>(out, v);
  }
}

void FeatureTable::save(const std::filesystem::path& path) const {
  auto out = detail::open_output(path, true);
  write_binary(out);
  detail::finish_output(out, path);
}

FeatureTable FeatureTable::read_binary(std::istream& in) {
  io::expect_magic(in, kMagic);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kBinaryVersion) {
    throw Error(ErrorCode::FormatVersion,
                "feature file version " + std::to_string(version) + " is not supported");
  }
  const auto count = io::read_le<std::uint64_t>(in);
  const auto dim = io::read_le<std::uint32_t>(in);
  if (dim == 0) throw Error(ErrorCode::Parse, "feature file declares d = 0");
  FeatureTable table(dim);
  std::vector<float> buffer(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    std::string id = io::read_short_string(in);
    for (auto& v : buffer) v = io::read_le<float>(in);
    table.add(std::move(id), buffer);
  }
  return table;
}

FeatureTable FeatureTable::read_jsonl(std::istream& in) {
  FeatureTable table;
  bool sized = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<float> buffer;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      auto id = doc.at("image_id").get<std::string>();
      buffer = doc.at("features").get<std::vector<float>>();
      if (!sized) {
        if (buffer.empty()) throw Error(ErrorCode::Parse, "empty feature vector");
        table = FeatureTable(buffer.size());
        sized = true;
      }
      table.add(std::move(id), buffer);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, "features line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "features line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

FeatureTable FeatureTable::load(const std::filesystem::path& path) {
  auto in = detail::open_input(path, true);
  char head[4] = {};
  in.read(head, 4);
  const bool binary = in.gcount() == 4 && std::string_view(head, 4) == kMagic;
  in.clear();
  in.seekg(0);
  try {
    return binary ? read_binary(in) : read_jsonl(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace stylerank
