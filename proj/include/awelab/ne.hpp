#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "awelab/corpus.hpp"
#include "awelab/error.hpp"

namespace awelab {

struct NEConfig {
  int partitions = 6;
};

// Half-open frame range [begin, end).
struct FrameRange {
  Index begin = 0;
  Index end = 0;

  Index size() const { return end - begin; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

// Boundaries floor(i*T/m), i = 0..m. When T < m some ranges would be empty;
// such a partition is the single frame at min(b_i, T-1).
inline std::vector<FrameRange> partition_bounds(Index frames, Index partitions) {
  if (frames < 1 || partitions < 1)
    throw ConfigInvalid("partition_bounds needs T >= 1 and m >= 1");
  std::vector<FrameRange> out;
  out.reserve(static_cast<std::size_t>(partitions));
  for (Index i = 0; i < partitions; ++i) {
    const Index lo = i * frames / partitions;
    const Index hi = (i + 1) * frames / partitions;
    if (lo == hi) {
      const Index f = std::min(lo, frames - 1);
      out.push_back({f, f + 1});
    } else {
      out.push_back({lo, hi});
    }
  }
  return out;
}

// Naive encoder: mean frame of each partition, concatenated in order (dim F*m).
template <class Derived>
Vector ne_encode(const Eigen::MatrixBase<Derived>& seq, Index partitions) {
  const Index dim = seq.cols();
  Vector out(dim * partitions);
  Index k = 0;
  for (const auto& r : partition_bounds(seq.rows(), partitions)) {
    out.segment(k * dim, dim) =
        seq.middleRows(r.begin, r.size()).colwise().mean().transpose();
    ++k;
  }
  return out;
}

}  // namespace awelab
