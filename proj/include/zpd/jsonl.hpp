#pragma once

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace zpd {

using Json = nlohmann::json;

/// Read a JSON Lines file. Blank lines are skipped; a malformed line raises
/// with its 1-based line number.
std::vector<Json> read_jsonl(const std::string& path);

/// Best-effort variant for checkpoint logs: a torn final line (interrupted
/// append) is dropped instead of raising.
std::vector<Json> read_jsonl_tolerant(const std::string& path);

/// Write all records, one per line, via write-temp-then-rename.
void write_jsonl(const std::string& path, const std::vector<Json>& records);

void append_jsonl(const std::string& path, const Json& record);

std::string dump_jsonl(const std::vector<Json>& records);

}  // namespace zpd
