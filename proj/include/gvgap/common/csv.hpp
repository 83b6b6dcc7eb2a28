#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gvgap {

/// A parsed CSV file with a header row. Quoted fields may contain commas.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);
  static CsvTable parse(const std::string& content, const std::string& origin = "<memory>");

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }

  /// Column index by name; throws ParseError naming the file when absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;

  const std::string& at(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }
  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Quotes a field when it contains a separator, quote or newline.
std::string csv_field(const std::string& value);

}  // namespace gvgap
