#pragma once

// Time-tag file I/O. Format: one CSV header line
//   timestamp_ps,party,basis,outcome
// then one record per detection, sorted ascending by timestamp. Files whose
// name ends in .gz are gzip-compressed; reading handles both transparently.
// Writing is canonical (fixed field formatting, LF line ends, deterministic
// gzip envelope), so equal streams serialize to identical bytes.

#include <string>

#include "qkdsim/timetag.hpp"

namespace qkdsim {

// Throws ParseError (with 1-based line number) on malformed content and
// InputError on order violations or unreadable files.
TagStream read_tags(const std::string& path);

// Throws InputError if the stream is unsorted or the file cannot be written.
void write_tags(const TagStream& tags, const std::string& path);

// In-memory variants used by the file functions and by tests.
TagStream parse_tags(const std::string& text);
std::string format_tags(const TagStream& tags);

}  // namespace qkdsim
