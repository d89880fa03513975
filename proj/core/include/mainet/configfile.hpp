#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mainet::config {

/// Flat dotted-key configuration: "section.key = value" lines, '#' comments.
/// std::map keeps the canonical form (and so the hash) independent of
/// insertion order.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_text(const std::string& text);
KeyValues load_config_file(const std::string& path);

/// Applies one "key=value" override (command line wins over file values).
void apply_override(KeyValues& kv, const std::string& assignment);

/// Rejects keys that are not in the schema; the error names the first
/// offending key.
void validate_keys(const KeyValues& kv, const std::vector<std::string>& schema);

std::string canonical_text(const KeyValues& kv);

/// FNV-1a 64 over the canonical text, as 16 hex chars.
std::string config_hash(const KeyValues& kv);

// typed getters with defaults
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
double get_double(const KeyValues& kv, const std::string& key, double fallback);
std::uint64_t get_u64(const KeyValues& kv, const std::string& key, std::uint64_t fallback);
bool get_bool(const KeyValues& kv, const std::string& key, bool fallback);

}  // namespace mainet::config
