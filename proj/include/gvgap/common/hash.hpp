#pragma once

#include <string>
#include <string_view>

namespace gvgap {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Short content-derived identifier: `prefix` + first 16 hex chars of SHA-256.
std::string content_id(std::string_view prefix, std::string_view canonical);

/// SHA-256 of a whole file, hex. Throws gvgap::Error when unreadable.
std::string file_sha256(const std::string& path);

}  // namespace gvgap
