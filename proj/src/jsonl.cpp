#include "zpd/jsonl.hpp"

#include "zpd/util.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zpd {

namespace {

std::vector<Json> parse_lines(const std::string& path, bool tolerant) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<Json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            bool at_eof = in.peek() == std::ifstream::traits_type::eof();
            if (tolerant && at_eof) break;
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed JSON line");
        }
        records.push_back(std::move(j));
    }
    return records;
}

}  // namespace

std::vector<Json> read_jsonl(const std::string& path) { return parse_lines(path, false); }

std::vector<Json> read_jsonl_tolerant(const std::string& path) { return parse_lines(path, true); }

std::string dump_jsonl(const std::vector<Json>& records) {
    std::ostringstream out;
    for (const auto& r : records) out << r.dump() << '\n';
    return out.str();
}

void write_jsonl(const std::string& path, const std::vector<Json>& records) {
    write_file_atomic(path, dump_jsonl(records));
}

void append_jsonl(const std::string& path, const Json& record) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to file: " + path);
    out << record.dump() << '\n';
    out.flush();
}

}  // namespace zpd
