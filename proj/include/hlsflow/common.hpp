#pragma once
// Shared error types and small text/file helpers used across modules.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hlsflow {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented contract (bad spec, bad config, bad file).
class ValidationError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

bool is_identifier(std::string_view s);

// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

// Fixed-point display rounding, e.g. format_fixed(16.82, 1) == "16.8".
std::string format_fixed(double v, int decimals);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
void append_file(const std::filesystem::path& path, std::string_view contents);

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

// RFC-4180 CSV with LF line endings.
namespace csv {

std::string escape_field(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

// Parses a whole document; throws ValidationError on an unterminated quote.
std::vector<std::vector<std::string>> parse(std::string_view text);

} // namespace csv

} // namespace hlsflow
