#pragma once

#include "fastband/grid.hpp"

#include <istream>
#include <string>
#include <string_view>

namespace fastband {

struct CsvOptions
{
  /// Skip the first non-empty line.
  bool header = false;
};

/// Numeric table, one observation per line. Fields are separated by commas
/// or, when a line has no comma, by whitespace. Blank lines and lines starting
/// with '#' are ignored. Numbers are parsed independently of the locale.
/// Throws ParseError on malformed or ragged input.
Sample parse_csv(std::string_view text, const CsvOptions& options = {});
Sample read_csv(std::istream& in, const CsvOptions& options = {});
Sample read_csv_file(const std::string& path, const CsvOptions& options = {});

/// Shortest round-trip decimal representation of x.
std::string format_double(double x);

} // namespace fastband
