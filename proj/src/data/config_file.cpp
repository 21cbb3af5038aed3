#include "dyndiff/data/config_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dyndiff::data {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

KeyValues parse_config(const std::string& text, const std::string& source) {
  KeyValues out;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    line = trim(comment == std::string::npos ? line : line.substr(0, comment));
    if (line.empty()) continue;
    auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw std::runtime_error(where() + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw std::runtime_error(where() + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(where() + "expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::runtime_error(where() + "empty key");
    if (!section.empty()) key = section + "." + key;
    if (out.count(key)) throw std::runtime_error(where() + "key '" + key + "' given twice");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValues load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string format_config(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace dyndiff::data
