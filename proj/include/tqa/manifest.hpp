#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tqa {

inline constexpr const char* kCodeVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

std::string read_file(const std::string& path);
/// Write-temp-then-rename so partial output never lands under the final name.
void atomic_write_file(const std::string& path, const std::string& content);

/// Reproducibility record written by every CLI invocation.
struct RunManifest {
    std::string command;
    std::string config_hash;
    std::map<std::string, std::string> dataset_hashes;  // input path -> hash
    std::uint64_t seed = 0;
    std::string code_version = kCodeVersion;
    double wall_clock_seconds = 0.0;
    std::vector<std::string> output_paths;

    std::string to_json() const;
    /// Writes to <workdir>/manifests/<command>-<config_hash>.json.
    std::string write(const std::string& workdir) const;
};

/// Flat key-value config text: one `key = value` per line, '#' comments.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::string kv_to_text(const std::map<std::string, std::string>& kv);

}  // namespace tqa
