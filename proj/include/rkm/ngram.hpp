#pragma once

#include <vector>

#include "rkm/common.hpp"

namespace rkm {

// Causal window over a sequence of m-vectors: column k holds the input
// `dilation*k` steps in the past, and positions before the sequence start
// read as exact zero vectors. No future positions ever enter a window.
struct NGramWindow {
  int n = 1;
  int m = 0;
  int dilation = 1;
  std::vector<Vec> cols;  // cols[k] = x_{t - k*dilation}, newest first
};

// Bank of n filter blocks, one per lag, all shaped [j x m]. Row i across
// the blocks forms the i-th filter over the whole window.
struct FilterBank {
  std::vector<Matrix> blocks;  // blocks[k] applies to lag k

  int n() const { return static_cast<int>(blocks.size()); }
  int j() const { return blocks.empty() ? 0 : blocks[0].rows; }
  int m() const { return blocks.empty() ? 0 : blocks[0].cols; }
  void check() const;  // all blocks share shape
};

// Window at time t. Throws std::out_of_range when t is outside the sequence.
NGramWindow window(const std::vector<Vec>& seq, int t, int n, int dilation = 1);

// y = sum over k of blocks[k] * cols[k]. Throws ShapeError on mismatch.
Vec contract(const FilterBank& bank, const NGramWindow& win);

}  // namespace rkm
