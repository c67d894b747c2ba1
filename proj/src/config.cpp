#include "config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace maxmix {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str(), path);
}

ConfigDoc ConfigDoc::parse_string(const std::string& text,
                                  const std::string& origin) {
  ConfigDoc doc;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      }
      doc.find_or_add(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": key outside of any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    doc.set(section, key, value);
  }
  return doc;
}

const ConfigDoc::Section* ConfigDoc::find(const std::string& name) const {
  for (const Section& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

ConfigDoc::Section& ConfigDoc::find_or_add(const std::string& name) {
  for (Section& s : sections_) {
    if (s.name == name) return s;
  }
  sections_.push_back({name, {}});
  return sections_.back();
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  const Section* s = find(section);
  if (!s) return false;
  for (const auto& kv : s->entries) {
    if (kv.first == key) return true;
  }
  return false;
}

std::string ConfigDoc::get(const std::string& section, const std::string& key) const {
  const Section* s = find(section);
  if (s) {
    for (const auto& kv : s->entries) {
      if (kv.first == key) return kv.second;
    }
  }
  throw ConfigError("missing config key '" + section + "." + key + "'");
}

std::string ConfigDoc::get_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double ConfigDoc::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + section + "." + key +
                      "' is not a number: '" + v + "'");
  }
}

double ConfigDoc::get_double_or(const std::string& section, const std::string& key,
                                double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int ConfigDoc::get_int_or(const std::string& section, const std::string& key,
                          int fallback) const {
  if (!has(section, key)) return fallback;
  const double d = get_double(section, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw ConfigError("config key '" + section + "." + key + "' must be an integer");
  }
  return i;
}

bool ConfigDoc::get_bool_or(const std::string& section, const std::string& key,
                            bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + section + "." + key + "' must be a boolean");
}

std::vector<double> ConfigDoc::get_doubles_or(const std::string& section,
                                              const std::string& key,
                                              std::vector<double> fallback) const {
  if (!has(section, key)) return fallback;
  std::istringstream is(get(section, key));
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + section + "." + key +
                        "' contains a non-number: '" + tok + "'");
    }
  }
  if (out.empty()) {
    throw ConfigError("config key '" + section + "." + key + "' is empty");
  }
  return out;
}

std::vector<std::string> ConfigDoc::get_words_or(
    const std::string& section, const std::string& key,
    std::vector<std::string> fallback) const {
  if (!has(section, key)) return fallback;
  std::istringstream is(get(section, key));
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  if (out.empty()) {
    throw ConfigError("config key '" + section + "." + key + "' is empty");
  }
  return out;
}

void ConfigDoc::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  Section& s = find_or_add(section);
  for (auto& kv : s.entries) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  s.entries.emplace_back(key, value);
}

void ConfigDoc::set_dotted(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value: '" + assignment + "'");
  }
  const std::string section = trim(assignment.substr(0, dot));
  const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
  const std::string value = trim(assignment.substr(eq + 1));
  if (section.empty() || key.empty()) {
    throw ConfigError("override must look like section.key=value: '" + assignment + "'");
  }
  set(section, key, value);
}

void ConfigDoc::require_known_keys(const std::string& section,
                                   const std::set<std::string>& allowed) const {
  const Section* s = find(section);
  if (!s) return;
  for (const auto& kv : s->entries) {
    if (!allowed.count(kv.first)) {
      throw ConfigError("unknown config key '" + section + "." + kv.first + "'");
    }
  }
}

std::vector<std::string> ConfigDoc::section_names() const {
  std::vector<std::string> out;
  out.reserve(sections_.size());
  for (const Section& s : sections_) out.push_back(s.name);
  return out;
}

std::string ConfigDoc::serialize() const {
  std::ostringstream os;
  for (const Section& s : sections_) {
    os << "[" << s.name << "]\n";
    for (const auto& kv : s.entries) {
      os << kv.first << " = " << kv.second << "\n";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace maxmix
