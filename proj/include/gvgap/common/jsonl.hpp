#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gvgap {

using nlohmann::json;

/// Reads one JSON value per non-empty line. Throws ParseError naming the line.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes the values one per line (compact, UTF-8) via a temp file + rename.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

void append_jsonl(const std::filesystem::path& path, const json& row);

/// Whole-file helpers that share the atomic-replace behaviour.
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace gvgap
