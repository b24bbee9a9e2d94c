#include "rkm/ngram.hpp"

#include <stdexcept>
#include <string>

namespace rkm {

void FilterBank::check() const {
  if (blocks.empty()) throw ShapeError("FilterBank: no blocks");
  for (const Matrix& b : blocks)
    if (b.rows != blocks[0].rows || b.cols != blocks[0].cols)
      throw ShapeError("FilterBank: blocks disagree on shape, " +
                       std::to_string(blocks[0].rows) + "x" +
                       std::to_string(blocks[0].cols) + " vs " +
                       std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

NGramWindow window(const std::vector<Vec>& seq, int t, int n, int dilation) {
  if (t < 0 || t >= static_cast<int>(seq.size()))
    throw std::out_of_range("window: t=" + std::to_string(t) +
                            " outside sequence of length " +
                            std::to_string(seq.size()));
  if (n < 1 || dilation < 1)
    throw std::invalid_argument("window: n and dilation must be >= 1");
  const int m = static_cast<int>(seq[0].size());
  NGramWindow w;
  w.n = n;
  w.m = m;
  w.dilation = dilation;
  w.cols.reserve(n);
  for (int k = 0; k < n; ++k) {
    const int s = t - k * dilation;
    if (s >= 0)
      w.cols.push_back(seq[s]);
    else
      w.cols.emplace_back(m, 0.0);  // causal-left zero padding
  }
  return w;
}

Vec contract(const FilterBank& bank, const NGramWindow& win) {
  bank.check();
  if (bank.n() != win.n)
    throw ShapeError("contract: bank has " + std::to_string(bank.n()) +
                     " blocks but window has " + std::to_string(win.n) +
                     " columns");
  if (bank.m() != win.m)
    throw ShapeError("contract: bank channel width " + std::to_string(bank.m()) +
                     " vs window channel width " + std::to_string(win.m));
  Vec y(bank.j(), 0.0);
  for (int k = 0; k < win.n; ++k) {
    const Vec part = matvec(bank.blocks[k], win.cols[k]);
    for (int i = 0; i < bank.j(); ++i) y[i] += part[i];
  }
  return y;
}

}  // namespace rkm
