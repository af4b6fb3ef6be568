#pragma once

// Label maps as plain PGM (P2) and as "x,y,label" CSV.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hmm2/error.hpp"

namespace hmm2 {

using LabelMap = std::vector<std::vector<std::size_t>>;  // [y][x]

/// Grey level of each cell is its label; maxval is max(1, n_labels - 1).
inline void write_pgm(std::ostream& out, const LabelMap& map, std::size_t n_labels) {
  const std::size_t h = map.size(), w = h ? map[0].size() : 0;
  out << "P2\n" << w << ' ' << h << '\n' << (n_labels > 1 ? n_labels - 1 : 1) << '\n';
  for (const auto& row : map) {
    for (std::size_t x = 0; x < row.size(); ++x) out << (x ? " " : "") << row[x];
    out << '\n';
  }
}

inline LabelMap read_pgm(std::istream& in) {
  std::string magic;
  in >> magic;
  if (magic != "P2") throw ParseError("not a plain PGM (P2) file");
  auto next = [&in]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return std::stoul(tok);
    }
    throw ParseError("truncated PGM file");
  };
  const std::size_t w = next(), h = next();
  const std::size_t maxval = next();
  LabelMap map(h, std::vector<std::size_t>(w));
  for (auto& row : map)
    for (auto& v : row) {
      v = next();
      if (v > maxval) throw ParseError("PGM value exceeds maxval");
    }
  return map;
}

inline void write_map_csv(std::ostream& out, const LabelMap& map) {
  out << "x,y,label\n";
  for (std::size_t y = 0; y < map.size(); ++y)
    for (std::size_t x = 0; x < map[y].size(); ++x) out << x << ',' << y << ',' << map[y][x] << '\n';
}

}  // namespace hmm2
