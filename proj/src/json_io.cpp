#include "provsyn/json_io.hpp"

#include <fstream>

#include "provsyn/error.hpp"
#include "provsyn/util.hpp"

namespace provsyn {

using nlohmann::json;

json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, where + ": " + e.what());
  }
}

json read_json_file(const std::string& path) { return parse_json_text(read_text_file(path), path); }

void for_each_jsonl(const std::string& path, const std::function<void(const json&, const std::string&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    fn(parse_json_text(line, where), where);
  }
}

void JsonlWriter::write(const std::string& path) const { write_text_file(path, text_); }

}  // namespace provsyn
