#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace zpd {

/// Stable 64-bit FNV-1a. Used wherever identity must survive across processes
/// (std::hash makes no such promise).
std::uint64_t fnv1a64(std::string_view s);

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic RNG with a fixed algorithm, so seeded runs are byte-identical
/// across platforms and standard libraries.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_double();
    /// Uniform in [0, n). n must be > 0.
    std::uint64_t uniform(std::uint64_t n);

private:
    std::uint64_t state_;
};

/// SHA-256 as a lowercase hex string; manifest/config identity hash.
std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, trim, collapse internal whitespace runs to single spaces.
/// Shared by the mock judge and exact-match acceptance.
std::string normalize_answer(std::string_view s);

/// Lowercased alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

bool starts_with(std::string_view s, std::string_view prefix);

/// Case-insensitive search; npos if absent.
std::size_t ifind(std::string_view haystack, std::string_view needle);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

std::optional<std::string> getenv_opt(const std::string& name);

}  // namespace zpd
