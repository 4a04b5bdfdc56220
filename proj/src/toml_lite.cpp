#include "depthkit/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "depthkit/error.hpp"

namespace depthkit::toml {

const Value* Table::find(std::string_view key) const {
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (keys_[i] == key) return &values_[i];
  }
  return nullptr;
}

Value* Table::find(std::string_view key) {
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (keys_[i] == key) return &values_[i];
  }
  return nullptr;
}

Value& Table::insert(std::string key, Value value) {
  keys_.push_back(std::move(key));
  values_.push_back(std::move(value));
  return values_.back();
}

const Table* Table::table(std::string_view key) const {
  const Value* v = find(key);
  return v ? std::get_if<Table>(&v->data) : nullptr;
}

std::vector<const Table*> Table::tables(std::string_view key) const {
  std::vector<const Table*> out;
  const Value* v = find(key);
  if (!v) return out;
  if (const auto* arr = std::get_if<Array>(&v->data)) {
    for (const auto& item : *arr) {
      if (const auto* t = std::get_if<Table>(&item.data)) out.push_back(t);
    }
  }
  return out;
}

namespace {

[[noreturn]] void type_error(std::string_view key, const char* expected) {
  throw Error(ErrorCode::ConfigError, "key '" + std::string(key) + "' must be " + expected);
}

} // namespace

std::optional<double> Table::number(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  if (const auto* d = std::get_if<double>(&v->data)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v->data)) return double(*i);
  type_error(key, "a number");
}

std::optional<std::int64_t> Table::integer(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  if (const auto* i = std::get_if<std::int64_t>(&v->data)) return *i;
  type_error(key, "an integer");
}

std::optional<bool> Table::boolean(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  if (const auto* b = std::get_if<bool>(&v->data)) return *b;
  type_error(key, "a boolean");
}

std::optional<std::string> Table::string(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  if (const auto* s = std::get_if<std::string>(&v->data)) return *s;
  type_error(key, "a string");
}

std::optional<std::vector<double>> Table::numbers(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  const auto* arr = std::get_if<Array>(&v->data);
  if (!arr) type_error(key, "an array of numbers");
  std::vector<double> out;
  for (const auto& item : *arr) {
    if (const auto* d = std::get_if<double>(&item.data)) {
      out.push_back(*d);
    } else if (const auto* i = std::get_if<std::int64_t>(&item.data)) {
      out.push_back(double(*i));
    } else {
      type_error(key, "an array of numbers");
    }
  }
  return out;
}

std::optional<std::vector<std::string>> Table::strings(std::string_view key) const {
  const Value* v = find(key);
  if (!v) return std::nullopt;
  const auto* arr = std::get_if<Array>(&v->data);
  if (!arr) type_error(key, "an array of strings");
  std::vector<std::string> out;
  for (const auto& item : *arr) {
    const auto* s = std::get_if<std::string>(&item.data);
    if (!s) type_error(key, "an array of strings");
    out.push_back(*s);
  }
  return out;
}

namespace {

class Parser {
public:
  explicit Parser(std::string_view text) : text_(text) {}

  Table run() {
    Table root;
    Table* current = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array = peek(1) == '[';
        pos_ += array ? 2 : 1;
        std::vector<std::string> path = dotted_key();
        skip_inline_space();
        expect(']');
        if (array) expect(']');
        end_of_line();
        current = array ? &append_array_table(root, path) : &open_table(root, path);
      } else {
        std::vector<std::string> path = dotted_key();
        skip_inline_space();
        expect('=');
        skip_inline_space();
        Value v = value();
        end_of_line();
        Table* target = current;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
          target = &child_table(*target, path[i]);
        }
        if (target->find(path.back())) fail("duplicate key '" + path.back() + "'");
        target->insert(path.back(), std::move(v));
      }
    }
    return root;
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;

  bool eof() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ConfigError,
                "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // whitespace, comments and newlines inside arrays
  void skip_array_space() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_inline_space();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    ++pos_;
  }

  std::string key_part() {
    skip_inline_space();
    if (peek() == '"' || peek() == '\'') return quoted();
    const std::size_t start = pos_;
    while (!eof()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        ++pos_;
      } else {
        break;
      }
    }
    if (start == pos_) fail("expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key_part()};
    skip_inline_space();
    while (peek() == '.') {
      ++pos_;
      parts.push_back(key_part());
      skip_inline_space();
    }
    return parts;
  }

  std::string quoted() {
    const char q = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = peek();
      ++pos_;
      if (c == q) break;
      if (c == '\\' && q == '"') {
        const char e = peek();
        ++pos_;
        switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail("unsupported escape sequence");
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  Value value() {
    const char c = peek();
    if (c == '"' || c == '\'') return Value{quoted()};
    if (c == '[') {
      ++pos_;
      Array arr;
      skip_array_space();
      while (peek() != ']') {
        arr.push_back(value());
        skip_array_space();
        if (peek() == ',') {
          ++pos_;
          skip_array_space();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
      ++pos_;
      return Value{std::move(arr)};
    }
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return Value{true};
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return Value{false};
    }
    const std::size_t start = pos_;
    while (!eof()) {
      const char d = peek();
      if (std::isdigit(static_cast<unsigned char>(d)) || d == '+' || d == '-' || d == '.' ||
          d == 'e' || d == 'E' || d == '_') {
        ++pos_;
      } else {
        break;
      }
    }
    std::string token;
    for (char d : text_.substr(start, pos_ - start)) {
      if (d != '_') token += d;
    }
    if (token.empty()) fail("expected a value");
    if (token.front() == '+') token.erase(0, 1);
    const bool is_float = token.find_first_of(".eE") != std::string::npos;
    if (is_float) {
      double d = 0.0;
      auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), d);
      if (ec != std::errc() || p != token.data() + token.size() || !std::isfinite(d)) {
        fail("bad float '" + token + "'");
      }
      return Value{d};
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), i);
    if (ec != std::errc() || p != token.data() + token.size()) fail("bad integer '" + token + "'");
    return Value{i};
  }

  Table& child_table(Table& parent, const std::string& key) {
    Value* v = parent.find(key);
    if (!v) v = &parent.insert(key, Value{Table{}});
    if (auto* t = std::get_if<Table>(&v->data)) return *t;
    if (auto* arr = std::get_if<Array>(&v->data)) {
      if (!arr->empty()) {
        if (auto* t = std::get_if<Table>(&arr->back().data)) return *t;
      }
    }
    fail("key '" + key + "' is not a table");
  }

  Table& open_table(Table& root, const std::vector<std::string>& path) {
    Table* t = &root;
    for (const auto& part : path) t = &child_table(*t, part);
    return *t;
  }

  Table& append_array_table(Table& root, const std::vector<std::string>& path) {
    Table* t = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) t = &child_table(*t, path[i]);
    Value* v = t->find(path.back());
    if (!v) v = &t->insert(path.back(), Value{Array{}});
    auto* arr = std::get_if<Array>(&v->data);
    if (!arr) fail("key '" + path.back() + "' is not an array of tables");
    arr->push_back(Value{Table{}});
    return std::get<Table>(arr->back().data);
  }
};

} // namespace

Table parse(std::string_view text) { return Parser(text).run(); }

Table parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::ConfigError, "cannot open config '" + path.string() + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.detail());
  }
}

} // namespace depthkit::toml
