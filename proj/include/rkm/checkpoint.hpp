#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rkm/heads.hpp"

namespace rkm {

// Versioned binary model file (little-endian):
//   magic "RKMC", version u32,
//   variant u8, m u32, d u32, n u32, dilation u32,
//   sigma_i_sq f64, sigma_f_sq f64, flags u32,
//   head kind u8 (+ head dims), array count u32, then named arrays:
//     section tag u8, name length u32, name bytes,
//     rows u32, cols u32, rows*cols f64.
// Section tags: 0 cell parameter, 1 wavelet extra (time grid), 2 metadata
// scalar, 3 head parameter. Loading reproduces outputs bit-exactly.
enum class HeadKind : uint8_t { kNone = 0, kClassifier = 1, kLanguageModel = 2 };

void save_cell(const std::string& path, Cell& cell);
void save_classifier(const std::string& path, Classifier& model);
// Character models may carry their byte table ("meta.charset") so that a
// later evaluation tokenizes new text identically.
void save_lm(const std::string& path, LanguageModel& model,
             const std::vector<uint8_t>* charset = nullptr);

std::unique_ptr<Cell> load_cell(const std::string& path);
std::unique_ptr<Classifier> load_classifier(const std::string& path);
std::unique_ptr<LanguageModel> load_lm(const std::string& path,
                                       std::vector<uint8_t>* charset_out = nullptr);

// Reads just enough of the header to tell which loader applies.
HeadKind peek_head_kind(const std::string& path);

}  // namespace rkm
