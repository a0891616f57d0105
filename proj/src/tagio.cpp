#include "qkdsim/tagio.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string_view>

#include "qkdsim/errors.hpp"

namespace qkdsim {

namespace {

constexpr std::string_view kHeader = "timestamp_ps,party,basis,outcome";

bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void check_sorted(const TagStream& tags, const char* what) {
  for (std::size_t i = 1; i < tags.size(); ++i) {
    if (tags[i].timestamp_ps < tags[i - 1].timestamp_ps) {
      throw InputError(std::string(what) + ": tags not sorted by timestamp at record " +
                       std::to_string(i + 1));
    }
  }
}

}  // namespace

std::string format_tags(const TagStream& tags) {
  std::string out;
  out.reserve(tags.size() * 24 + kHeader.size() + 1);
  out.append(kHeader);
  out.push_back('\n');
  char buf[32];
  for (const auto& t : tags) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), t.timestamp_ps);
    out.append(buf, end);
    out.push_back(',');
    out.append(to_string(t.party));
    out.push_back(',');
    out.append(to_string(t.basis));
    out.push_back(',');
    out.push_back(t.outcome ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

TagStream parse_tags(const std::string& text) {
  TagStream tags;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const std::size_t n = text.size();

  while (pos < n) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = n;
    ++line_no;
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;

    if (line_no == 1) {
      if (line != kHeader) {
        throw ParseError("expected header '" + std::string(kHeader) + "'", line_no);
      }
      continue;
    }
    if (line.empty() && pos >= n) break;  // single trailing newline

    TimeTag tag;
    const char* p = line.data();
    const char* lend = p + line.size();
    auto [np, ec] = std::from_chars(p, lend, tag.timestamp_ps);
    if (ec != std::errc{} || np == lend || *np != ',') {
      throw ParseError("bad timestamp field", line_no);
    }
    std::string_view rest(np + 1, static_cast<std::size_t>(lend - np - 1));
    if (rest.substr(0, 2) == "A,") {
      tag.party = Party::A;
    } else if (rest.substr(0, 2) == "B,") {
      tag.party = Party::B;
    } else {
      throw ParseError("bad party field (want A or B)", line_no);
    }
    rest.remove_prefix(2);
    if (rest.substr(0, 3) == "HV,") {
      tag.basis = Basis::HV;
    } else if (rest.substr(0, 3) == "DA,") {
      tag.basis = Basis::DA;
    } else {
      throw ParseError("bad basis field (want HV or DA)", line_no);
    }
    rest.remove_prefix(3);
    if (rest == "0") {
      tag.outcome = 0;
    } else if (rest == "1") {
      tag.outcome = 1;
    } else {
      throw ParseError("bad outcome field (want 0 or 1)", line_no);
    }
    if (!tags.empty() && tag.timestamp_ps < tags.back().timestamp_ps) {
      throw ParseError("timestamps not sorted ascending", line_no);
    }
    tags.push_back(tag);
  }
  if (line_no == 0) {
    throw ParseError("empty file, expected header '" + std::string(kHeader) + "'", 1);
  }
  return tags;
}

TagStream read_tags(const std::string& path) {
  // gzread reads plain files transparently, so one path covers both formats.
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw InputError("cannot open tag file: " + path);
  std::string text;
  char buf[1 << 16];
  int got;
  while ((got = gzread(f, buf, sizeof(buf))) > 0) {
    text.append(buf, static_cast<std::size_t>(got));
  }
  const bool read_error = got < 0;
  gzclose(f);
  if (read_error) throw InputError("error while reading tag file: " + path);
  return parse_tags(text);
}

void write_tags(const TagStream& tags, const std::string& path) {
  check_sorted(tags, "write_tags");
  const std::string text = format_tags(tags);
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw InputError("cannot open tag file for writing: " + path);
    // Deterministic bytes: zlib's gz writer stores no file name and a zero
    // mtime, so identical streams compress to identical files.
    std::size_t off = 0;
    while (off < text.size()) {
      const unsigned len = static_cast<unsigned>(std::min<std::size_t>(text.size() - off, 1u << 30));
      if (gzwrite(f, text.data() + off, len) != static_cast<int>(len)) {
        gzclose(f);
        throw InputError("error while writing tag file: " + path);
      }
      off += len;
    }
    if (gzclose(f) != Z_OK) throw InputError("error while closing tag file: " + path);
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open tag file for writing: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("error while writing tag file: " + path);
  }
}

const char* to_string(Party p) { return p == Party::A ? "A" : "B"; }
const char* to_string(Basis b) { return b == Basis::HV ? "HV" : "DA"; }

}  // namespace qkdsim
