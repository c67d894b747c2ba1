#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace maxmix {

// Minimal INI-style document: [section] headers, key = value lines, '#'
// comments.  Section and key order is preserved for serialization.
class ConfigDoc {
 public:
  static ConfigDoc parse_file(const std::string& path);
  static ConfigDoc parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;

  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  int get_int_or(const std::string& section, const std::string& key,
                 int fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const;
  std::vector<double> get_doubles_or(const std::string& section,
                                     const std::string& key,
                                     std::vector<double> fallback) const;
  std::vector<std::string> get_words_or(const std::string& section,
                                        const std::string& key,
                                        std::vector<std::string> fallback) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);
  // "section.key=value" (CLI override form)
  void set_dotted(const std::string& assignment);

  // rejects keys outside the allowed set for a section the document defines
  void require_known_keys(const std::string& section,
                          const std::set<std::string>& allowed) const;
  std::vector<std::string> section_names() const;

  std::string serialize() const;

 private:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };
  std::vector<Section> sections_;

  const Section* find(const std::string& name) const;
  Section& find_or_add(const std::string& name);
};

std::string format_g17(double v);

}  // namespace maxmix
