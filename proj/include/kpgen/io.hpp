#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace kpgen {

using Json = nlohmann::json;

/// Writes to "<path>.tmp" and renames onto <path> on commit(); an uncommitted
/// writer removes its temporary file, so readers never see partial output.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(std::filesystem::path path, bool binary = false);
    ~AtomicFileWriter();
    AtomicFileWriter(const AtomicFileWriter&) = delete;
    AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

    std::ostream& stream() { return out_; }
    void commit();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

/// Calls `fn(record, line_number)` for every non-blank line of a JSON-lines
/// file. Malformed JSON raises DataError naming the file and line.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const Json&, std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Formats a double with enough digits to round-trip exactly.
std::string format_double(double value);

}  // namespace kpgen

#include <map>

namespace kpgen {

/// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_key_values(std::string_view text, std::string_view source = "<config>");
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

double parse_double(const std::string& value, std::string_view key);
std::uint64_t parse_uint(const std::string& value, std::string_view key);

}  // namespace kpgen

#include <istream>
#include <ostream>

namespace kpgen {

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

/// Sequential binary reader that reports truncation with the byte offset.
class CheckedReader {
public:
    CheckedReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    void read(void* dst, std::size_t n);
    template <typename T>
    T pod() {
        T value{};
        read(&value, sizeof(T));
        return value;
    }
    std::string string();
    std::size_t offset() const { return offset_; }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::string name_;
    std::size_t offset_ = 0;
};

void write_string(std::ostream& out, std::string_view s);

}  // namespace kpgen
