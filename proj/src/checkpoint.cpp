#include "rkm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace rkm {

namespace {

constexpr char kMagic[4] = {'R', 'K', 'M', 'C'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kFlagLayerNorm = 1u << 0;
constexpr uint32_t kFlagWavelet = 1u << 1;
constexpr uint32_t kFlagLearnSigmas = 1u << 2;

constexpr uint8_t kTagCell = 0;
constexpr uint8_t kTagWaveletExtra = 1;
constexpr uint8_t kTagMeta = 2;
constexpr uint8_t kTagHead = 3;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) fail("cannot write " + path);
  }
  void bytes(const void* p, size_t len) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void array(uint8_t tag, const std::string& name, int rows, int cols,
             const Vec& data) {
    u8(tag);
    u32(static_cast<uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<uint32_t>(rows));
    u32(static_cast<uint32_t>(cols));
    bytes(data.data(), data.size() * 8);
  }
};

struct NamedArray {
  uint8_t tag = 0;
  int rows = 0, cols = 0;
  Vec data;
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) fail("cannot open " + p);
  }
  void bytes(void* p, size_t len, const char* what) {
    if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(len)))
      fail(path + ": truncated reading " + what);
  }
  uint8_t u8(const char* what) {
    uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    bytes(&v, 8, what);
    return v;
  }
  std::pair<std::string, NamedArray> array() {
    NamedArray a;
    a.tag = u8("array tag");
    const uint32_t name_len = u32("array name length");
    if (name_len > 4096) fail(path + ": implausible array name length");
    std::string name(name_len, '\0');
    bytes(name.data(), name_len, "array name");
    a.rows = static_cast<int>(u32("array rows"));
    a.cols = static_cast<int>(u32("array cols"));
    if (a.rows < 1 || a.cols < 1) fail(path + ": bad shape for " + name);
    a.data.resize(static_cast<size_t>(a.rows) * a.cols);
    bytes(a.data.data(), a.data.size() * 8, "array data");
    return {std::move(name), std::move(a)};
  }
};

struct Header {
  CellConfig cell;
  HeadKind head = HeadKind::kNone;
  int vocab = 0;
  int n_classes = 0;
};

void write_header(Writer& w, const CellConfig& c, HeadKind head, int vocab,
                  int n_classes) {
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<uint8_t>(c.variant));
  w.u32(static_cast<uint32_t>(c.m));
  w.u32(static_cast<uint32_t>(c.d));
  w.u32(static_cast<uint32_t>(c.n));
  w.u32(static_cast<uint32_t>(c.dilation));
  w.f64(c.sigma_i_sq);
  w.f64(c.sigma_f_sq);
  uint32_t flags = 0;
  if (c.use_layer_norm) flags |= kFlagLayerNorm;
  if (c.use_wavelet) flags |= kFlagWavelet;
  if (c.learn_sigmas) flags |= kFlagLearnSigmas;
  w.u32(flags);
  w.u8(static_cast<uint8_t>(head));
  if (head == HeadKind::kClassifier) {
    w.u32(static_cast<uint32_t>(vocab));
    w.u32(static_cast<uint32_t>(n_classes));
  } else if (head == HeadKind::kLanguageModel) {
    w.u32(static_cast<uint32_t>(vocab));
  }
}

Header read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(r.path + ": not a model file (bad magic)");
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    fail(r.path + ": unsupported version " + std::to_string(version));
  Header h;
  const uint8_t variant = r.u8("variant");
  if (variant > static_cast<uint8_t>(CellVariant::kCnn))
    fail(r.path + ": unknown variant tag " + std::to_string(variant));
  h.cell.variant = static_cast<CellVariant>(variant);
  h.cell.m = static_cast<int>(r.u32("m"));
  h.cell.d = static_cast<int>(r.u32("d"));
  h.cell.n = static_cast<int>(r.u32("n"));
  h.cell.dilation = static_cast<int>(r.u32("dilation"));
  h.cell.sigma_i_sq = r.f64("sigma_i_sq");
  h.cell.sigma_f_sq = r.f64("sigma_f_sq");
  const uint32_t flags = r.u32("flags");
  h.cell.use_layer_norm = flags & kFlagLayerNorm;
  h.cell.use_wavelet = flags & kFlagWavelet;
  h.cell.learn_sigmas = flags & kFlagLearnSigmas;
  const uint8_t head = r.u8("head kind");
  if (head > static_cast<uint8_t>(HeadKind::kLanguageModel))
    fail(r.path + ": unknown head kind " + std::to_string(head));
  h.head = static_cast<HeadKind>(head);
  if (h.head == HeadKind::kClassifier) {
    h.vocab = static_cast<int>(r.u32("vocab"));
    h.n_classes = static_cast<int>(r.u32("n_classes"));
  } else if (h.head == HeadKind::kLanguageModel) {
    h.vocab = static_cast<int>(r.u32("vocab"));
  }
  return h;
}

struct ExtraArray {
  uint8_t tag = kTagMeta;
  std::string name;
  Vec data;  // stored as a column
};

void write_body(Writer& w, Cell& cell, ParamSet* head_params,
                const std::vector<ExtraArray>& extra = {}) {
  uint32_t count = static_cast<uint32_t>(cell.params().items().size());
  const bool meta_eps = cell.config().use_layer_norm;
  if (meta_eps) ++count;
  if (cell.wavelet()) ++count;  // the time grid
  count += static_cast<uint32_t>(extra.size());
  std::vector<Parameter*> head_items;
  if (head_params) {
    for (Parameter* p : head_params->items()) {
      if (cell.params().find(p->name)) continue;  // cell params listed once
      head_items.push_back(p);
      ++count;
    }
  }
  w.u32(count);
  for (Parameter* p : cell.params().items())
    w.array(kTagCell, p->name, p->rows, p->cols, p->value);
  if (cell.wavelet()) {
    const Vec& grid = cell.wavelet()->grid_vector();
    w.array(kTagWaveletExtra, "wavelet.grid", static_cast<int>(grid.size()), 1,
            grid);
  }
  if (meta_eps)
    w.array(kTagMeta, "meta.ln_eps", 1, 1, Vec{cell.config().ln_eps});
  for (const ExtraArray& e : extra)
    w.array(e.tag, e.name, static_cast<int>(e.data.size()), 1, e.data);
  for (Parameter* p : head_items)
    w.array(kTagHead, p->name, p->rows, p->cols, p->value);
}

std::map<std::string, NamedArray> read_body(Reader& r) {
  const uint32_t count = r.u32("array count");
  std::map<std::string, NamedArray> arrays;
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, arr] = r.array();
    if (!arrays.emplace(std::move(name), std::move(arr)).second)
      fail(r.path + ": duplicate array");
  }
  char extra;
  if (r.in.read(&extra, 1)) fail(r.path + ": trailing bytes");
  return arrays;
}

void fill_params(const std::string& path, ParamSet& params,
                 std::map<std::string, NamedArray>& arrays) {
  for (Parameter* p : params.items()) {
    auto it = arrays.find(p->name);
    if (it == arrays.end()) fail(path + ": missing parameter " + p->name);
    const NamedArray& a = it->second;
    if (a.rows != p->rows || a.cols != p->cols)
      fail(path + ": parameter " + p->name + " has shape " +
           std::to_string(a.rows) + "x" + std::to_string(a.cols) +
           ", model expects " + std::to_string(p->rows) + "x" +
           std::to_string(p->cols));
    p->value = a.data;
    arrays.erase(it);
  }
}

CellConfig config_from(const std::string& path, Header& h,
                       std::map<std::string, NamedArray>& arrays) {
  CellConfig cfg = h.cell;
  auto eps = arrays.find("meta.ln_eps");
  if (eps != arrays.end()) {
    cfg.ln_eps = eps->second.data[0];
    arrays.erase(eps);
  } else if (cfg.use_layer_norm) {
    fail(path + ": layer-norm model without meta.ln_eps");
  }
  return cfg;
}

void check_wavelet_grid(const std::string& path, Cell& cell,
                        std::map<std::string, NamedArray>& arrays) {
  if (!cell.wavelet()) return;
  auto it = arrays.find("wavelet.grid");
  if (it == arrays.end()) fail(path + ": wavelet model without time grid");
  const Vec& stored = it->second.data;
  const Vec& built = cell.wavelet()->grid_vector();
  if (stored.size() != built.size() ||
      !std::equal(stored.begin(), stored.end(), built.begin()))
    fail(path + ": stored time grid disagrees with construction");
  arrays.erase(it);
}

void check_consumed(const std::string& path,
                    const std::map<std::string, NamedArray>& arrays) {
  if (!arrays.empty())
    fail(path + ": unexpected array '" + arrays.begin()->first + "'");
}

}  // namespace

void save_cell(const std::string& path, Cell& cell) {
  Writer w(path);
  write_header(w, cell.config(), HeadKind::kNone, 0, 0);
  write_body(w, cell, nullptr);
  if (!w.out) fail("failed writing " + path);
}

void save_classifier(const std::string& path, Classifier& model) {
  Writer w(path);
  write_header(w, model.cell().config(), HeadKind::kClassifier,
               model.config().vocab, model.config().n_classes);
  write_body(w, model.cell(), &model.params());
  if (!w.out) fail("failed writing " + path);
}

void save_lm(const std::string& path, LanguageModel& model,
             const std::vector<uint8_t>* charset) {
  Writer w(path);
  write_header(w, model.cell().config(), HeadKind::kLanguageModel,
               model.config().vocab, 0);
  std::vector<ExtraArray> extra;
  if (charset) {
    if (static_cast<int>(charset->size()) != model.config().vocab)
      fail(path + ": character set size " + std::to_string(charset->size()) +
           " does not match vocabulary " +
           std::to_string(model.config().vocab));
    extra.push_back({kTagMeta, "meta.charset",
                     Vec(charset->begin(), charset->end())});
  }
  write_body(w, model.cell(), &model.params(), extra);
  if (!w.out) fail("failed writing " + path);
}

HeadKind peek_head_kind(const std::string& path) {
  Reader r(path);
  return read_header(r).head;
}

std::unique_ptr<Cell> load_cell(const std::string& path) {
  Reader r(path);
  Header h = read_header(r);
  if (h.head != HeadKind::kNone)
    fail(path + ": file holds a full model, not a bare cell");
  auto arrays = read_body(r);
  CellConfig cfg = config_from(path, h, arrays);
  auto cell = std::make_unique<Cell>(cfg);
  check_wavelet_grid(path, *cell, arrays);
  fill_params(path, cell->params(), arrays);
  check_consumed(path, arrays);
  return cell;
}

std::unique_ptr<Classifier> load_classifier(const std::string& path) {
  Reader r(path);
  Header h = read_header(r);
  if (h.head != HeadKind::kClassifier)
    fail(path + ": not a classifier checkpoint");
  auto arrays = read_body(r);
  Classifier::Config cfg;
  cfg.cell = config_from(path, h, arrays);
  cfg.vocab = h.vocab;
  cfg.n_classes = h.n_classes;
  auto model = std::make_unique<Classifier>(cfg);
  check_wavelet_grid(path, model->cell(), arrays);
  fill_params(path, model->params(), arrays);
  check_consumed(path, arrays);
  return model;
}

std::unique_ptr<LanguageModel> load_lm(const std::string& path,
                                       std::vector<uint8_t>* charset_out) {
  Reader r(path);
  Header h = read_header(r);
  if (h.head != HeadKind::kLanguageModel)
    fail(path + ": not a language-model checkpoint");
  auto arrays = read_body(r);
  if (charset_out) charset_out->clear();
  if (auto cs = arrays.find("meta.charset"); cs != arrays.end()) {
    if (charset_out)
      for (double v : cs->second.data)
        charset_out->push_back(static_cast<uint8_t>(v));
    arrays.erase(cs);
  }
  LanguageModel::Config cfg;
  cfg.cell = config_from(path, h, arrays);
  cfg.vocab = h.vocab;
  auto model = std::make_unique<LanguageModel>(cfg);
  check_wavelet_grid(path, model->cell(), arrays);
  fill_params(path, model->params(), arrays);
  check_consumed(path, arrays);
  return model;
}

}  // namespace rkm
