#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace depthkit::toml {

struct Value;
using Array = std::vector<Value>;

/// Insertion-ordered key/value table.
class Table {
public:
  const Value* find(std::string_view key) const;
  Value* find(std::string_view key);
  Value& insert(std::string key, Value value);
  bool empty() const noexcept { return keys_.empty(); }
  const std::vector<std::string>& keys() const noexcept { return keys_; }

  const Table* table(std::string_view key) const;
  /// Array-of-tables `[[key]]`; empty when absent.
  std::vector<const Table*> tables(std::string_view key) const;

  std::optional<double> number(std::string_view key) const;
  std::optional<std::int64_t> integer(std::string_view key) const;
  std::optional<bool> boolean(std::string_view key) const;
  std::optional<std::string> string(std::string_view key) const;
  std::optional<std::vector<double>> numbers(std::string_view key) const;
  std::optional<std::vector<std::string>> strings(std::string_view key) const;

private:
  std::vector<std::string> keys_;
  std::vector<Value> values_;
};

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array, Table> data;
};

/// Parses the subset of TOML used by depthkit config files: comments,
/// `[table]` / `[a.b]` headers, `[[array.of.tables]]`, bare or quoted keys,
/// strings, integers, floats, booleans and (possibly multi-line) arrays.
/// Throws depthkit::Error(ConfigError) with line and column on bad input.
Table parse(std::string_view text);
Table parse_file(const std::filesystem::path& path);

} // namespace depthkit::toml
