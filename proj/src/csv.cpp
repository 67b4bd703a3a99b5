#include "fastband/csv.hpp"

#include "fastband/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace fastband {

namespace {

bool is_space(char c)
{
  return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s)
{
  while (!s.empty() && is_space(s.front()))
    s.remove_prefix(1);
  while (!s.empty() && is_space(s.back()))
    s.remove_suffix(1);
  return s;
}

double parse_field(std::string_view field, std::size_t line)
{
  field = trim(field);
  if (!field.empty() && field.front() == '+')
    field.remove_prefix(1);
  double value = 0.0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": '" +
                                         std::string(field) + "' is not a number");
  }
  return value;
}

std::vector<double> parse_line(std::string_view line, std::size_t lineno)
{
  std::vector<double> out;
  if (line.find(',') != std::string_view::npos) {
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      out.push_back(parse_field(line.substr(start, comma - start), lineno));
      if (comma == std::string_view::npos)
        break;
      start = comma + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i]))
      ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j]))
      ++j;
    if (j > i)
      out.push_back(parse_field(line.substr(i, j - i), lineno));
    i = j;
  }
  return out;
}

} // namespace

Sample parse_csv(std::string_view text, const CsvOptions& options)
{
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  bool skipped_header = !options.header;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos)
      nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line.front() == '#')
      continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const std::vector<double> row = parse_line(line, lineno);
    if (rows == 0)
      cols = row.size();
    else if (row.size() != cols) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected " +
                                           std::to_string(cols) + " fields, found " +
                                           std::to_string(row.size()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0)
    throw Error(ErrorKind::ParseError, "no data rows");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Index>(i), static_cast<Index>(k)) = values[i * cols + k];
  try {
    return Sample(std::move(m));
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

Sample read_csv(std::istream& in, const CsvOptions& options)
{
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), options);
}

Sample read_csv_file(const std::string& path, const CsvOptions& options)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
  return read_csv(in, options);
}

std::string format_double(double x)
{
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

} // namespace fastband
