#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <initializer_list>
#include <string>

#include "proxbridge/core_model.hpp"

namespace proxbridge::io {

nlohmann::json support_to_json(const ActionSupport& s);
ActionSupport support_from_json(const nlohmann::json& j);

/// Column names y, w_1..w_pw, z_1..z_pz, a, x_1..x_dx.
std::vector<std::string> csv_columns(Eigen::Index p_w, Eigen::Index p_z, Eigen::Index d_x);

/// Writes the CSV (values printed with 17 significant digits) and a sidecar
/// JSON holding the dimensions, the action support and the table hash.
void write_table(const ObservationTable& t, const std::filesystem::path& csv, const std::filesystem::path& sidecar);
/// Reads a table; columns are located by name. Throws ValidationError naming
/// a missing column or an unparsable cell, IoError for unreadable files.
ObservationTable read_table(const std::filesystem::path& csv, const std::filesystem::path& sidecar);
/// `<csv>.json` next to the CSV.
std::filesystem::path default_sidecar(const std::filesystem::path& csv);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; parent directories are created.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Throws ConfigError when `j` is not an object or has a key outside `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);
/// Throws ConfigError when `key` is absent.
const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where);

/// FNV-1a of the canonical (key-sorted, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

}  // namespace proxbridge::io
