#pragma once

// Neighbourhood-preserving scans of 2-D grids.
//
// Coordinates are (x, y) with x the column and y the row, y growing downwards.
// The Hilbert orientation is fixed: at order 1 the curve visits
// (0,0), (0,1), (1,1), (1,0), a "U" opening towards y = 0.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hmm2/error.hpp"

namespace hmm2 {

struct Cell {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline std::size_t manhattan(const Cell& a, const Cell& b) {
  auto d = [](std::size_t u, std::size_t v) { return u > v ? u - v : v - u; };
  return d(a.x, b.x) + d(a.y, b.y);
}

/// Total order on a width x height grid; order[t] is the cell visited at step t.
struct SiteOrdering {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Cell> order;

  std::size_t size() const noexcept { return order.size(); }

  /// Inverse permutation: raster index (y * width + x) -> scan position.
  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> pos(width * height, std::numeric_limits<std::size_t>::max());
    for (std::size_t t = 0; t < order.size(); ++t) pos[order[t].y * width + order[t].x] = t;
    return pos;
  }

  bool is_bijection() const {
    if (order.size() != width * height) return false;
    std::vector<bool> seen(width * height, false);
    for (const auto& c : order) {
      if (c.x >= width || c.y >= height) return false;
      const std::size_t r = c.y * width + c.x;
      if (seen[r]) return false;
      seen[r] = true;
    }
    return true;
  }
};

inline constexpr unsigned kMaxHilbertOrder = 15;

/// Hilbert curve over a 2^k x 2^k grid.
inline SiteOrdering hilbert_curve(unsigned k) {
  if (k > kMaxHilbertOrder) throw Error("Hilbert order " + std::to_string(k) + " exceeds the supported grid size");
  const std::size_t n = std::size_t{1} << k;
  SiteOrdering o;
  o.width = o.height = n;
  o.order.reserve(n * n);
  for (std::size_t d = 0; d < n * n; ++d) {
    std::size_t x = 0, y = 0, t = d;
    for (std::size_t s = 1; s < n; s *= 2) {
      const std::size_t rx = 1 & (t / 2);
      const std::size_t ry = 1 & (t ^ rx);
      if (ry == 0) {
        if (rx == 1) {
          x = s - 1 - x;
          y = s - 1 - y;
        }
        std::swap(x, y);
      }
      x += s * rx;
      y += s * ry;
      t /= 4;
    }
    o.order.push_back({x, y});
  }
  return o;
}

/// Boustrophedon scan: even rows left to right, odd rows right to left.
inline SiteOrdering serpentine_grid(std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw Error("serpentine grid needs positive dimensions");
  SiteOrdering o;
  o.width = width;
  o.height = height;
  o.order.reserve(width * height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t i = 0; i < width; ++i) o.order.push_back({y % 2 == 0 ? i : width - 1 - i, y});
  return o;
}

namespace detail {

enum class Flip { None, MirrorX, MirrorY, Rotate180 };

inline Cell flipped(const Cell& c, Flip f, std::size_t w, std::size_t h) {
  switch (f) {
    case Flip::None: return c;
    case Flip::MirrorX: return {w - 1 - c.x, c.y};
    case Flip::MirrorY: return {c.x, h - 1 - c.y};
    case Flip::Rotate180: return {w - 1 - c.x, h - 1 - c.y};
  }
  return c;
}

}  // namespace detail

/// Two-level scan: the outer ordering walks blocks, the inner one walks the
/// cells inside each block. Every block after the first uses the mirrored or
/// rotated variant of the inner scan whose first cell lies closest to the last
/// cell of the previous block (ties resolved in the order none, mirror-x,
/// mirror-y, rotate). Adjacency is guaranteed only inside blocks.
inline SiteOrdering compose_two_level(const SiteOrdering& outer, const SiteOrdering& inner) {
  const std::size_t lim = std::numeric_limits<std::uint32_t>::max();
  if (outer.width == 0 || inner.width == 0 || outer.width > lim / inner.width || outer.height > lim / inner.height)
    throw Error("two-level grid size overflows");
  const std::size_t w = outer.width * inner.width, h = outer.height * inner.height;
  if (w > lim / h) throw Error("two-level grid size overflows");

  SiteOrdering o;
  o.width = w;
  o.height = h;
  o.order.reserve(w * h);
  constexpr std::array<detail::Flip, 4> flips = {detail::Flip::None, detail::Flip::MirrorX, detail::Flip::MirrorY,
                                                 detail::Flip::Rotate180};
  for (std::size_t b = 0; b < outer.order.size(); ++b) {
    const Cell origin{outer.order[b].x * inner.width, outer.order[b].y * inner.height};
    auto global = [&](const Cell& c, detail::Flip f) {
      const Cell l = detail::flipped(c, f, inner.width, inner.height);
      return Cell{origin.x + l.x, origin.y + l.y};
    };
    detail::Flip best = detail::Flip::None;
    if (b > 0 && !inner.order.empty()) {
      std::size_t best_d = std::numeric_limits<std::size_t>::max();
      for (auto f : flips) {
        const std::size_t d = manhattan(o.order.back(), global(inner.order.front(), f));
        if (d < best_d) {
          best_d = d;
          best = f;
        }
      }
    }
    for (const auto& c : inner.order) o.order.push_back(global(c, best));
  }
  return o;
}

/// image[y][x] read along the ordering.
template <typename T>
std::vector<T> linearize(const std::vector<std::vector<T>>& image, const SiteOrdering& ordering) {
  if (image.size() != ordering.height) throw Error("linearize: image height does not match ordering");
  for (const auto& row : image)
    if (row.size() != ordering.width) throw Error("linearize: image width does not match ordering");
  std::vector<T> out;
  out.reserve(ordering.size());
  for (const auto& c : ordering.order) out.push_back(image[c.y][c.x]);
  return out;
}

/// Inverse of linearize.
template <typename T>
std::vector<std::vector<T>> delinearize(const std::vector<T>& labels, const SiteOrdering& ordering) {
  if (labels.size() != ordering.size()) throw Error("delinearize: sequence length does not match ordering");
  std::vector<std::vector<T>> image(ordering.height, std::vector<T>(ordering.width));
  for (std::size_t t = 0; t < labels.size(); ++t) image[ordering.order[t].y][ordering.order[t].x] = labels[t];
  return image;
}

/// CSV with header "index,x,y".
inline void write_ordering_csv(std::ostream& out, const SiteOrdering& ordering) {
  out << "index,x,y\n";
  for (std::size_t t = 0; t < ordering.size(); ++t)
    out << t << ',' << ordering.order[t].x << ',' << ordering.order[t].y << '\n';
}

}  // namespace hmm2
