#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gvgap::text {

std::string_view trim(std::string_view s);

/// NFC-normalized, Unicode case-folded form used for every entity comparison.
std::string fold(std::string_view s);

/// Case-insensitive (folded) substring test. An empty needle never matches.
bool contains_folded(std::string_view haystack, std::string_view needle);

bool equals_folded(std::string_view a, std::string_view b);

std::vector<std::string> split(std::string_view s, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of non-overlapping occurrences of `needle` in `haystack`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

}  // namespace gvgap::text
