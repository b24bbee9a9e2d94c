#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rkm/common.hpp"

namespace rkm {

// One labeled sequence: token ids (token mode) or a time-major [T x C]
// real matrix (raw mode).
struct Item {
  std::vector<int> tokens;
  Matrix feats;  // rows = timesteps
  int label = 0;
};

struct SequenceDataset {
  std::vector<Item> items;
  int vocab = 0;             // > 0 in token mode
  int channels = 0;          // > 0 in raw mode
  int n_classes = 0;
  std::vector<std::string> token_names;  // token mode: id -> spelling

  bool token_mode() const { return vocab > 0; }
  size_t size() const { return items.size(); }
};

// "label,tok tok tok ..." per line. The vocabulary comes from a sidecar
// file `path + ".vocab"` (one token per line, line number = id) when
// present, else from the sorted unique tokens of the file itself.
SequenceDataset load_token_csv(const std::string& path);
void save_token_csv(const std::string& path, const SequenceDataset& ds);

// Real-valued multichannel records. Binary layout (little-endian):
//   magic "RKSG", u32 record count, then per record
//   u32 C, u32 T, i32 label, T*C f64 (each timestep's C values contiguous).
// The CSV form holds, per record, a "C,T,label" header line followed by
// T lines of C comma-separated reals. The loader sniffs the magic.
SequenceDataset load_signal_matrix(const std::string& path);
void save_signal_matrix(const std::string& path, const SequenceDataset& ds);
void save_signal_matrix_csv(const std::string& path, const SequenceDataset& ds);

// Memory probe: positions 0..length-1 drawn uniformly from `classes`
// symbols, a query marker (id = classes) appended at position `length`,
// label = the symbol `lag` steps before the marker. Throws unless
// 1 <= lag < length.
SequenceDataset gen_delayed_recall(int lag, int classes, int length, int count,
                                   uint64_t seed);

// Binary tokens, label = XOR over the sequence.
SequenceDataset gen_parity(int length, int count, uint64_t seed);

// Label = presence of the designated trigram (1,2,3) anywhere in a
// length-20 sequence over 5 symbols; roughly balanced classes.
SequenceDataset gen_keyword(int count, uint64_t seed);

// Deterministic index split (no shuffle): first ceil(frac*N) items, rest.
std::pair<SequenceDataset, SequenceDataset> split_dataset(
    const SequenceDataset& ds, double frac_first);

// Character-level tokenization of a text file: id = rank of the byte among
// the distinct bytes present (sorted). Fills `charset` with the byte table
// (index = token id), so a model trained on one file can be applied to
// another through load_chars_as.
std::vector<int> load_chars(const std::string& path,
                            std::vector<uint8_t>& charset);

// Tokenization under a fixed byte table; a byte absent from the table is
// an error (names the offending byte).
std::vector<int> load_chars_as(const std::string& path,
                               const std::vector<uint8_t>& charset);

}  // namespace rkm
