#include "rkm/data.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rkm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void finalize_classes(SequenceDataset& ds) {
  int mx = -1;
  for (const Item& it : ds.items) mx = std::max(mx, it.label);
  ds.n_classes = mx + 1;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_i32(std::ostream& out, int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& in, const std::string& what) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) fail("truncated file at " + what);
  return v;
}
int32_t read_i32(std::istream& in, const std::string& what) {
  int32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) fail("truncated file at " + what);
  return v;
}

constexpr char kSignalMagic[4] = {'R', 'K', 'S', 'G'};

// Generated datasets spell their tokens numerically so they can round-trip
// through the token CSV format.
std::vector<std::string> numeric_names(int vocab) {
  std::vector<std::string> names;
  names.reserve(vocab);
  for (int i = 0; i < vocab; ++i) names.push_back(std::to_string(i));
  return names;
}

}  // namespace

SequenceDataset load_token_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);

  SequenceDataset ds;
  std::map<std::string, int> vocab;
  bool sidecar = false;
  {
    std::ifstream vin(path + ".vocab");
    if (vin) {
      sidecar = true;
      std::string line;
      int id = 0;
      while (std::getline(vin, line)) {
        if (line.empty()) continue;
        if (!vocab.emplace(line, id).second)
          fail(path + ".vocab: duplicate token '" + line + "'");
        ds.token_names.push_back(line);
        ++id;
      }
    }
  }

  struct RawRow {
    int label;
    std::vector<std::string> toks;
  };
  std::vector<RawRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos)
      fail(path + ":" + std::to_string(lineno) + ": expected 'label,tokens'");
    RawRow row;
    try {
      size_t used = 0;
      row.label = std::stoi(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("");
    } catch (const std::exception&) {
      fail(path + ":" + std::to_string(lineno) + ": bad label '" +
           line.substr(0, comma) + "'");
    }
    if (row.label < 0)
      fail(path + ":" + std::to_string(lineno) + ": negative label");
    row.toks = split_ws(line.substr(comma + 1));
    if (row.toks.empty())
      fail(path + ":" + std::to_string(lineno) + ": empty token sequence");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(path + ": empty dataset");

  if (!sidecar) {
    std::set<std::string> uniq;
    for (const RawRow& r : rows) uniq.insert(r.toks.begin(), r.toks.end());
    int id = 0;
    for (const std::string& tok : uniq) {
      vocab.emplace(tok, id++);
      ds.token_names.push_back(tok);
    }
  }

  for (size_t r = 0; r < rows.size(); ++r) {
    Item it;
    it.label = rows[r].label;
    for (const std::string& tok : rows[r].toks) {
      auto found = vocab.find(tok);
      if (found == vocab.end())
        fail(path + ": token '" + tok + "' missing from vocabulary");
      it.tokens.push_back(found->second);
    }
    ds.items.push_back(std::move(it));
  }
  ds.vocab = static_cast<int>(vocab.size());
  finalize_classes(ds);
  return ds;
}

void save_token_csv(const std::string& path, const SequenceDataset& ds) {
  if (!ds.token_mode()) fail("save_token_csv: dataset is not token-mode");
  if (static_cast<int>(ds.token_names.size()) != ds.vocab)
    fail("save_token_csv: dataset lacks token spellings");
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  for (const Item& it : ds.items) {
    out << it.label << ',';
    for (size_t i = 0; i < it.tokens.size(); ++i)
      out << (i ? " " : "") << ds.token_names[it.tokens[i]];
    out << '\n';
  }
  std::ofstream vout(path + ".vocab");
  if (!vout) fail("cannot write " + path + ".vocab");
  for (const std::string& tok : ds.token_names) vout << tok << '\n';
}

SequenceDataset load_signal_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  SequenceDataset ds;

  if (in && std::memcmp(magic, kSignalMagic, 4) == 0) {
    const uint32_t count = read_u32(in, path + " record count");
    if (count == 0) fail(path + ": empty dataset");
    for (uint32_t r = 0; r < count; ++r) {
      const std::string where = path + " record " + std::to_string(r);
      const uint32_t C = read_u32(in, where);
      const uint32_t T = read_u32(in, where);
      if (C == 0 || T == 0) fail(where + ": zero dimension");
      Item it;
      it.label = read_i32(in, where);
      it.feats = Matrix(static_cast<int>(T), static_cast<int>(C));
      if (!in.read(reinterpret_cast<char*>(it.feats.v.data()),
                   static_cast<std::streamsize>(it.feats.v.size() * 8)))
        fail(where + ": body shorter than C*T header promise");
      if (ds.channels == 0)
        ds.channels = static_cast<int>(C);
      else if (ds.channels != static_cast<int>(C))
        fail(where + ": channel count differs from earlier records");
      ds.items.push_back(std::move(it));
    }
    char extra;
    if (in.read(&extra, 1)) fail(path + ": trailing bytes after last record");
  } else {
    // CSV form: per record a "C,T,label" line then T rows of C values.
    in.clear();
    in.seekg(0);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      int C = 0, T = 0, label = 0;
      char c1 = 0, c2 = 0;
      std::istringstream hdr(line);
      if (!(hdr >> C >> c1 >> T >> c2 >> label) || c1 != ',' || c2 != ',')
        fail(path + ":" + std::to_string(lineno) + ": expected 'C,T,label'");
      if (C < 1 || T < 1)
        fail(path + ":" + std::to_string(lineno) + ": bad dimensions");
      Item it;
      it.label = label;
      it.feats = Matrix(T, C);
      for (int t = 0; t < T; ++t) {
        if (!std::getline(in, line))
          fail(path + ": record at line " + std::to_string(lineno) +
               " truncated: " + std::to_string(T) + " rows promised");
        ++lineno;
        std::istringstream row(line);
        for (int c = 0; c < C; ++c) {
          char sep = ',';
          if (!(row >> it.feats.at(t, c)) || (c + 1 < C && !(row >> sep)))
            fail(path + ":" + std::to_string(lineno) + ": bad row, need " +
                 std::to_string(C) + " values");
        }
      }
      if (ds.channels == 0)
        ds.channels = C;
      else if (ds.channels != C)
        fail(path + ":" + std::to_string(lineno) +
             ": channel count differs from earlier records");
      ds.items.push_back(std::move(it));
    }
    if (ds.items.empty()) fail(path + ": empty dataset");
  }
  finalize_classes(ds);
  return ds;
}

void save_signal_matrix(const std::string& path, const SequenceDataset& ds) {
  if (ds.token_mode()) fail("save_signal_matrix: dataset is token-mode");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out.write(kSignalMagic, 4);
  write_u32(out, static_cast<uint32_t>(ds.items.size()));
  for (const Item& it : ds.items) {
    write_u32(out, static_cast<uint32_t>(it.feats.cols));
    write_u32(out, static_cast<uint32_t>(it.feats.rows));
    write_i32(out, it.label);
    out.write(reinterpret_cast<const char*>(it.feats.v.data()),
              static_cast<std::streamsize>(it.feats.v.size() * 8));
  }
}

void save_signal_matrix_csv(const std::string& path, const SequenceDataset& ds) {
  if (ds.token_mode()) fail("save_signal_matrix_csv: dataset is token-mode");
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  out.precision(17);
  for (const Item& it : ds.items) {
    out << it.feats.cols << ',' << it.feats.rows << ',' << it.label << '\n';
    for (int t = 0; t < it.feats.rows; ++t) {
      for (int c = 0; c < it.feats.cols; ++c)
        out << (c ? "," : "") << it.feats.at(t, c);
      out << '\n';
    }
  }
}

SequenceDataset gen_delayed_recall(int lag, int classes, int length, int count,
                                   uint64_t seed) {
  if (classes < 2) fail("gen_delayed_recall: need at least 2 classes");
  if (length < 2) fail("gen_delayed_recall: need length >= 2");
  if (lag < 1 || lag >= length)
    fail("gen_delayed_recall: lag " + std::to_string(lag) +
         " must satisfy 1 <= lag < length = " + std::to_string(length));
  if (count < 1) fail("gen_delayed_recall: need count >= 1");
  Rng rng(seed);
  std::uniform_int_distribution<int> sym(0, classes - 1);
  SequenceDataset ds;
  ds.vocab = classes + 1;  // symbols plus the query marker
  ds.n_classes = classes;
  ds.token_names = numeric_names(classes);
  ds.token_names.push_back("mark");
  ds.items.reserve(count);
  for (int i = 0; i < count; ++i) {
    Item it;
    it.tokens.resize(length + 1);
    for (int p = 0; p < length; ++p) it.tokens[p] = sym(rng);
    it.tokens[length] = classes;  // marker
    it.label = it.tokens[length - lag];
    ds.items.push_back(std::move(it));
  }
  return ds;
}

SequenceDataset gen_parity(int length, int count, uint64_t seed) {
  if (length < 1) fail("gen_parity: need length >= 1");
  if (count < 1) fail("gen_parity: need count >= 1");
  Rng rng(seed);
  std::uniform_int_distribution<int> bit(0, 1);
  SequenceDataset ds;
  ds.vocab = 2;
  ds.n_classes = 2;
  ds.token_names = numeric_names(2);
  ds.items.reserve(count);
  for (int i = 0; i < count; ++i) {
    Item it;
    it.tokens.resize(length);
    int x = 0;
    for (int p = 0; p < length; ++p) {
      it.tokens[p] = bit(rng);
      x ^= it.tokens[p];
    }
    it.label = x;
    ds.items.push_back(std::move(it));
  }
  return ds;
}

SequenceDataset gen_keyword(int count, uint64_t seed) {
  if (count < 1) fail("gen_keyword: need count >= 1");
  constexpr int kLen = 20;
  constexpr int kVocab = 5;
  constexpr int kTrigram[3] = {1, 2, 3};
  Rng rng(seed);
  std::uniform_int_distribution<int> sym(0, kVocab - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> pos(0, kLen - 3);

  auto contains = [&](const std::vector<int>& s) {
    for (size_t i = 0; i + 2 < s.size(); ++i)
      if (s[i] == kTrigram[0] && s[i + 1] == kTrigram[1] && s[i + 2] == kTrigram[2])
        return true;
    return false;
  };

  SequenceDataset ds;
  ds.vocab = kVocab;
  ds.n_classes = 2;
  ds.token_names = numeric_names(kVocab);
  ds.items.reserve(count);
  for (int i = 0; i < count; ++i) {
    Item it;
    it.label = coin(rng);
    it.tokens.resize(kLen);
    do {
      for (int p = 0; p < kLen; ++p) it.tokens[p] = sym(rng);
      if (it.label == 1) {
        const int at = pos(rng);
        for (int k = 0; k < 3; ++k) it.tokens[at + k] = kTrigram[k];
      }
    } while (contains(it.tokens) != (it.label == 1));
    ds.items.push_back(std::move(it));
  }
  return ds;
}

std::pair<SequenceDataset, SequenceDataset> split_dataset(
    const SequenceDataset& ds, double frac_first) {
  if (frac_first < 0.0 || frac_first > 1.0)
    fail("split_dataset: fraction must lie in [0, 1]");
  const size_t cut = static_cast<size_t>(frac_first * ds.items.size() + 0.5);
  SequenceDataset a = ds, b = ds;
  a.items.assign(ds.items.begin(), ds.items.begin() + cut);
  b.items.assign(ds.items.begin() + cut, ds.items.end());
  return {std::move(a), std::move(b)};
}

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (text.empty()) fail(path + ": empty file");
  return text;
}

}  // namespace

std::vector<int> load_chars(const std::string& path,
                            std::vector<uint8_t>& charset) {
  const std::string text = slurp(path);
  const std::set<uint8_t> present(text.begin(), text.end());
  charset.assign(present.begin(), present.end());
  return load_chars_as(path, charset);
}

std::vector<int> load_chars_as(const std::string& path,
                               const std::vector<uint8_t>& charset) {
  const std::string text = slurp(path);
  std::array<int, 256> ids;
  ids.fill(-1);
  for (size_t i = 0; i < charset.size(); ++i) ids[charset[i]] = static_cast<int>(i);
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (size_t pos = 0; pos < text.size(); ++pos) {
    const uint8_t c = static_cast<uint8_t>(text[pos]);
    if (ids[c] < 0)
      fail(path + ": byte " + std::to_string(c) + " at offset " +
           std::to_string(pos) + " is not in the model's character set");
    tokens.push_back(ids[c]);
  }
  return tokens;
}

}  // namespace rkm
