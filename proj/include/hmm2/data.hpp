#pragma once

// The site x time-slot matrix of categorical codes.
//
// CSV layout: header "site_id,<slot label>,<slot label>,...", then one row per
// site. Cells hold modality labels or integer codes; "-1" or an empty cell is a
// missing observation. A codebook CSV has header "code,label".

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hmm2/error.hpp"
#include "hmm2/hilbert.hpp"
#include "hmm2/model.hpp"

namespace hmm2 {

class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(std::vector<std::string> names) {
    for (auto& n : names) add(n);
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& label(std::size_t code) const { return names_.at(code); }
  const std::vector<std::string>& labels() const noexcept { return names_; }

  std::optional<Code> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  Code add(const std::string& name) {
    if (name.empty()) throw Error("codebook labels must be non-empty");
    if (index_.count(name)) throw Error("duplicate codebook label '" + name + "'");
    const Code c = static_cast<Code>(names_.size());
    names_.push_back(name);
    index_.emplace(name, c);
    return c;
  }

  friend bool operator==(const Codebook& a, const Codebook& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Code> index_;
};

/// Optional grid geometry: row r of the matrix is the site at scan position r.
struct Geometry {
  SiteOrdering ordering;
};

struct DataMatrix {
  std::vector<std::string> site_ids;
  std::vector<std::string> slot_labels;
  std::vector<Code> cells;  // n_sites x n_slots, row-major
  Codebook codebook;
  std::optional<Geometry> geometry;

  std::size_t n_sites() const noexcept { return site_ids.size(); }
  std::size_t n_slots() const noexcept { return slot_labels.size(); }
  std::size_t alphabet_size() const noexcept { return codebook.size(); }
  Code at(std::size_t site, std::size_t slot) const { return cells[site * n_slots() + slot]; }
  Code& at(std::size_t site, std::size_t slot) { return cells[site * n_slots() + slot]; }
};

struct CodebookPolicy {
  std::optional<Codebook> codebook;  // side codebook; built from the data when absent
  bool strict = true;                // unknown labels are errors when a codebook is given
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::optional<long> parse_integer(const std::string& s) {
  long v = 0;
  if (s.empty()) return std::nullopt;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool is_missing(const std::string& cell) { return cell.empty() || cell == "-1"; }

}  // namespace detail

inline Codebook load_codebook(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::map<long, std::string> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv_line(line);
    if (lineno == 1 && f.size() == 2 && f[0] == "code") continue;
    if (f.size() != 2) throw ParseError("codebook rows need exactly two fields (code,label)", lineno);
    auto code = detail::parse_integer(f[0]);
    if (!code || *code < 0) throw ParseError("invalid code '" + f[0] + "'", lineno);
    if (!entries.emplace(*code, f[1]).second) throw ParseError("duplicate code " + f[0], lineno);
  }
  Codebook cb;
  long expect = 0;
  for (auto& [code, label] : entries) {
    if (code != expect) throw ParseError("codebook codes must be contiguous from 0 (missing " + std::to_string(expect) + ")");
    cb.add(label);
    ++expect;
  }
  if (cb.size() == 0) throw ParseError("empty codebook");
  return cb;
}

inline void write_codebook(std::ostream& out, const Codebook& cb) {
  out << "code,label\n";
  for (std::size_t c = 0; c < cb.size(); ++c) out << c << ',' << cb.label(c) << '\n';
}

/// Parses a data CSV. Without a side codebook, cells that are all non-negative
/// integers are taken as codes (labels "0".."max"); otherwise every non-missing
/// cell is a label and codes follow first appearance in row-major order.
inline DataMatrix load_matrix(std::istream& in, const CodebookPolicy& policy = {}) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (header.empty()) {
      if (fields.size() < 2) throw ParseError("header needs site_id and at least one time slot", lineno);
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header.size())
      throw ParseError("row '" + fields[0] + "' has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(header.size()),
                       lineno);
    rows.emplace_back(lineno, std::move(fields));
  }
  if (header.empty()) throw ParseError("empty data file");
  if (rows.empty()) throw ParseError("data file has a header but no sites");

  DataMatrix m;
  m.slot_labels.assign(header.begin() + 1, header.end());
  const std::size_t t_slots = m.slot_labels.size();
  m.cells.reserve(rows.size() * t_slots);

  bool all_codes = !policy.codebook.has_value();
  long max_code = -1;
  if (all_codes) {
    for (const auto& [ln, f] : rows)
      for (std::size_t c = 1; c < f.size(); ++c) {
        if (detail::is_missing(f[c])) continue;
        auto v = detail::parse_integer(f[c]);
        if (!v || *v < 0) {
          all_codes = false;
          break;
        }
        max_code = std::max(max_code, *v);
      }
  }

  if (policy.codebook) {
    m.codebook = *policy.codebook;
  } else if (all_codes) {
    std::vector<std::string> names;
    for (long c = 0; c <= max_code; ++c) names.push_back(std::to_string(c));
    m.codebook = Codebook(std::move(names));
  }

  for (const auto& [ln, f] : rows) {
    m.site_ids.push_back(f[0]);
    for (std::size_t c = 1; c < f.size(); ++c) {
      const std::string& cell = f[c];
      if (detail::is_missing(cell)) {
        m.cells.push_back(kMissing);
        continue;
      }
      if (all_codes) {
        m.cells.push_back(static_cast<Code>(*detail::parse_integer(cell)));
        continue;
      }
      if (auto code = m.codebook.find(cell)) {
        m.cells.push_back(*code);
        continue;
      }
      if (policy.codebook) {
        auto v = detail::parse_integer(cell);
        if (v && *v >= 0 && static_cast<std::size_t>(*v) < m.codebook.size()) {
          m.cells.push_back(static_cast<Code>(*v));
          continue;
        }
        if (policy.strict)
          throw ParseError("unknown label '" + cell + "' in row '" + f[0] + "', column '" + header[c] + "'", ln);
      }
      m.cells.push_back(m.codebook.add(cell));
    }
  }
  if (m.codebook.size() == 0) throw ParseError("data file contains no observations");
  return m;
}

/// Canonical CSV form: labels from the codebook, "-1" for missing cells.
inline void write_matrix(std::ostream& out, const DataMatrix& m) {
  out << "site_id";
  for (const auto& s : m.slot_labels) out << ',' << s;
  out << '\n';
  for (std::size_t r = 0; r < m.n_sites(); ++r) {
    out << m.site_ids[r];
    for (std::size_t t = 0; t < m.n_slots(); ++t) {
      const Code c = m.at(r, t);
      out << ',';
      if (c == kMissing)
        out << "-1";
      else
        out << m.codebook.label(static_cast<std::size_t>(c));
    }
    out << '\n';
  }
}

/// Sequence r is row r in column order.
inline Corpus rows_as_sequences(const DataMatrix& m) {
  Corpus out(m.n_sites());
  for (std::size_t r = 0; r < m.n_sites(); ++r)
    out[r].assign(m.cells.begin() + std::ptrdiff_t(r * m.n_slots()),
                  m.cells.begin() + std::ptrdiff_t((r + 1) * m.n_slots()));
  return out;
}

/// Sequence t is column t in row order.
inline Corpus columns_as_sequences(const DataMatrix& m) {
  Corpus out(m.n_slots(), Sequence(m.n_sites()));
  for (std::size_t r = 0; r < m.n_sites(); ++r)
    for (std::size_t t = 0; t < m.n_slots(); ++t) out[t][r] = m.at(r, t);
  return out;
}

/// Treats the rows of `raster` as the cells of a width x height grid in raster
/// order (row r is cell (r % width, r / width)) and reorders them along
/// `ordering`. The result carries the ordering as its geometry.
inline DataMatrix apply_ordering(const DataMatrix& raster, const SiteOrdering& ordering) {
  if (raster.n_sites() != ordering.size())
    throw Error("grid of " + std::to_string(ordering.width) + "x" + std::to_string(ordering.height) + " = " +
                std::to_string(ordering.size()) + " cells does not match " + std::to_string(raster.n_sites()) +
                " data rows");
  DataMatrix out;
  out.slot_labels = raster.slot_labels;
  out.codebook = raster.codebook;
  out.cells.reserve(raster.cells.size());
  for (const auto& c : ordering.order) {
    const std::size_t r = c.y * ordering.width + c.x;
    out.site_ids.push_back(raster.site_ids[r]);
    for (std::size_t t = 0; t < raster.n_slots(); ++t) out.cells.push_back(raster.at(r, t));
  }
  out.geometry = Geometry{ordering};
  return out;
}

}  // namespace hmm2
