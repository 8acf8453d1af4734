#pragma once

// Flat key = value configuration with [section] headers:
//
//   [train]
//   c = 15
//   arch = gru
//   [data]
//   train = data/desk/train.txt
//
// Keys are addressed as "section.key". Unknown sections or keys are errors.
// Path values are resolved against the directory of the file they come from.

#include "vaelab/decoding.hpp"
#include "vaelab/vae.hpp"

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vaelab {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
    std::string name;  // section.key
    bool is_path;
    std::string help;
};

const std::vector<ConfigKey>& config_keys();

class RunConfig {
public:
    RunConfig() = default;

    static RunConfig parse(std::istream& is, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    // Validates the key; path values are resolved against `base`.
    void set(const std::string& key, const std::string& value,
             const std::filesystem::path& base = std::filesystem::current_path());

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback = "") const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Throws ConfigError when the key is missing.
    std::filesystem::path path(const std::string& key) const;

    // [train] overlaid on the desk defaults (or paper_scale with preset = paper).
    TrainConfig train_config() const;
    DecodePolicy decode_policy() const;

    // Sectioned key = value text, sorted.
    std::string snapshot() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace vaelab
