#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace textlrp::csv {

// One parsed record and the 1-based physical line it started on.
struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

// RFC-4180 reader: quoted fields may contain commas, doubled quotes and
// line breaks. CRLF and LF line endings are accepted. Blank lines are skipped.
std::vector<Record> parse(std::string_view text);
std::vector<Record> read_file(const std::string& path);

// Quotes a field only when it needs it.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace textlrp::csv
