#pragma once

#include <functional>
#include <string>

#include <json.hpp>

namespace provsyn {

/// Parses JSON text; syntax errors become MalformedFile prefixed by `where`.
nlohmann::json parse_json_text(const std::string& text, const std::string& where);

nlohmann::json read_json_file(const std::string& path);

/// Calls fn(value, "path:line") for every non-blank line of a JSON Lines file.
void for_each_jsonl(const std::string& path,
                    const std::function<void(const nlohmann::json&, const std::string&)>& fn);

/// Collects one compact JSON document per line.
class JsonlWriter {
 public:
  void add(const nlohmann::json& j) {
    text_ += j.dump();
    text_.push_back('\n');
  }
  void write(const std::string& path) const;

 private:
  std::string text_;
};

}  // namespace provsyn
