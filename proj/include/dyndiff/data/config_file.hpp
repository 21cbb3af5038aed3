#pragma once

#include <map>
#include <string>

namespace dyndiff::data {

using KeyValues = std::map<std::string, std::string>;

/// Parses a flat key/value document. Lines are `key = value`; a `[section]`
/// line prefixes following keys with "section."; `#` and `;` start comments.
/// A key given twice is an error, as is a line that is neither form.
KeyValues parse_config(const std::string& text, const std::string& source = "<memory>");
KeyValues load_config_file(const std::string& path);

/// `key = value` lines in key order, readable by parse_config.
std::string format_config(const KeyValues& kv);

}  // namespace dyndiff::data
