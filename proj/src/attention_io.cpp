// SPDX-License-Identifier: Apache-2.0
#include "maskforge/attention_io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskforge/errors.hpp"

namespace maskforge {

namespace {

void put_u32_le(std::string* out, std::uint32_t v) {
  out->push_back(static_cast<char>(v & 0xFF));
  out->push_back(static_cast<char>((v >> 8) & 0xFF));
  out->push_back(static_cast<char>((v >> 16) & 0xFF));
  out->push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32_le(std::string* out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  put_u32_le(out, bits);
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for '" + path + "'");
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

AttentionMap load_attention(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ATN1", 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected ATN1)");
  }
  if (bytes.size() < 12) {
    throw FormatError(path + ": truncated header at byte offset " +
                      std::to_string(bytes.size()));
  }
  const std::uint32_t k = get_u32_le(bytes.data() + 4);
  const std::uint32_t iteration = get_u32_le(bytes.data() + 8);
  if (k == 0) {
    throw ValidationError(path + ": patch count 0 (k >= 1 required)");
  }
  const std::size_t expected = 12 + std::size_t{k} * k * 4;
  if (bytes.size() < expected) {
    throw FormatError(path + ": truncated payload at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) {
    throw FormatError(path + ": trailing data at byte offset " +
                      std::to_string(expected));
  }

  AttentionMap attn;
  attn.k = static_cast<int>(k);
  attn.iteration = static_cast<int>(iteration);
  attn.a.resize(std::size_t{k} * k);
  for (std::size_t idx = 0; idx < attn.a.size(); ++idx) {
    const std::uint32_t bits = get_u32_le(bytes.data() + 12 + idx * 4);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    double v = static_cast<double>(f);
    if (!std::isfinite(v)) {
      throw ValidationError(path + ": non-finite attention entry at row " +
                            std::to_string(idx / k));
    }
    if (v < -1e-6) {
      throw ValidationError(path + ": negative attention entry at row " +
                            std::to_string(idx / k) + ", col " +
                            std::to_string(idx % k));
    }
    attn.a[idx] = v < 0.0 ? 0.0 : v;  // clamp f32 noise
  }

  for (std::uint32_t i = 0; i < k; ++i) {
    double sum = 0.0;
    for (std::uint32_t j = 0; j < k; ++j) sum += attn.at(i, j);
    if (std::abs(sum - 1.0) > 1e-2) {
      throw ValidationError(path + ": row " + std::to_string(i) + " sums to " +
                            std::to_string(sum) + ", outside [0.99, 1.01]");
    }
    for (std::uint32_t j = 0; j < k; ++j) attn.at(i, j) /= sum;
  }
  return attn;
}

void save_attention(const AttentionMap& attn, const std::string& path) {
  validate_row_stochastic(attn);
  std::string bytes;
  bytes.reserve(12 + attn.a.size() * 4);
  bytes += "ATN1";
  put_u32_le(&bytes, static_cast<std::uint32_t>(attn.k));
  put_u32_le(&bytes, static_cast<std::uint32_t>(attn.iteration));
  for (double v : attn.a) put_f32_le(&bytes, static_cast<float>(v));
  write_file(path, bytes);
}

std::string selection_to_json(const MaskSelection& sel) {
  nlohmann::ordered_json j;
  j["num_patches"] = sel.masked.size();
  j["ratio"] = sel.ratio;
  j["alpha"] = sel.alpha;
  j["t"] = sel.t;
  j["T"] = sel.T;
  std::vector<int> masked_indices;
  for (std::size_t i = 0; i < sel.masked.size(); ++i) {
    if (sel.masked[i]) masked_indices.push_back(static_cast<int>(i));
  }
  j["masked_indices"] = masked_indices;
  j["scores"] = sel.scores;
  j["seeds"] = nlohmann::ordered_json{{"cell_probs", sel.seeds.cell_probs},
                                      {"delta", sel.seeds.delta},
                                      {"em", sel.seeds.em},
                                      {"selection", sel.seeds.selection}};
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(sel.config_digest));
  j["config_hash"] = hex;
  return j.dump(2) + "\n";
}

std::string selection_to_csv(const MaskSelection& sel) {
  std::string out = "index,score,masked\n";
  for (std::size_t i = 0; i < sel.masked.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += format_double(sel.scores[i]);
    out += ',';
    out += sel.masked[i] ? '1' : '0';
    out += '\n';
  }
  return out;
}

void save_selection(const MaskSelection& sel, const std::string& path,
                    SelectionFormat format) {
  write_file(path, format == SelectionFormat::Json ? selection_to_json(sel)
                                                   : selection_to_csv(sel));
}

}  // namespace maskforge
