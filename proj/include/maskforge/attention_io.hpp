// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "maskforge/curriculum.hpp"
#include "maskforge/semantic_mask.hpp"

namespace maskforge {

// ATN1 container: "ATN1" magic, u32-LE patch count k, u32-LE iteration t,
// then k*k IEEE-754 f32-LE attention weights, row-major. Payload is single
// precision because that is what training stacks commonly export; in-memory
// math stays double.

enum class SelectionFormat { Json, Csv };

// Parses and validates an ATN1 file. Entries below -1e-6 are rejected, tiny
// negatives are clamped to 0, rows must sum to 1 within 1e-2 and are then
// renormalized to 1e-9 precision.
AttentionMap load_attention(const std::string& path);

// Byte-deterministic writer: identical maps produce identical files.
void save_attention(const AttentionMap& attn, const std::string& path);

// JSON object with keys num_patches, ratio, alpha, t, T, masked_indices
// (ascending), scores, seeds, config_hash, in that order. CSV: header plus
// one "index,score,masked" row per patch. Both byte-deterministic.
void save_selection(const MaskSelection& sel, const std::string& path,
                    SelectionFormat format);

// In-memory renderings backing save_selection; the CLI reuses them for stdout.
std::string selection_to_json(const MaskSelection& sel);
std::string selection_to_csv(const MaskSelection& sel);

}  // namespace maskforge
