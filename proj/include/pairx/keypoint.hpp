#pragma once

#include <compare>

namespace pairx {

// Feature-map grid coordinate: i is the column, j is the row.
struct Keypoint {
  int i = 0;
  int j = 0;

  friend auto operator<=>(const Keypoint&, const Keypoint&) = default;
};

// Row-major ordering (row first, then column).
inline bool row_major_less(const Keypoint& a, const Keypoint& b) {
  return a.j != b.j ? a.j < b.j : a.i < b.i;
}

}  // namespace pairx
