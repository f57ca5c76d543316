#pragma once

#include <filesystem>

#include "gradmorph/tensor.hpp"

namespace gradmorph {

namespace fs = std::filesystem;

// --- NetPBM images (maxval 255) --------------------------------------------
// PGM P5 <-> [1,H,W]; PPM P6 <-> [3,H,W]. Values map linearly to [0,1]
// (255 -> 1.0 exactly); writing quantizes with round(v * 255).

Tensor read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Tensor& image);
Tensor read_ppm(const fs::path& path);
void write_ppm(const fs::path& path, const Tensor& image);
// Dispatch on the P5/P6 magic.
Tensor read_image_any(const fs::path& path);

// Label maps ride on PGM with value = round(255 * label / (L-1)), which
// round-trips exactly for L <= 256.
void write_labelmap_pgm(const fs::path& path, const LabelMap& map, int num_classes);
LabelMap read_labelmap_pgm(const fs::path& path, int num_classes);

// --- raw tensor file ---------------------------------------------------------
// Little-endian: magic "GMTR", u32 version=1, u32 rank, u64 dims[rank],
// f64 data. Round-trips bit-exactly.

void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

// Whole-file helpers (throw IoError on failure).
std::vector<std::uint8_t> read_file_bytes(const fs::path& path);
void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

// 64-bit FNV-1a, hex-encoded; used for manifests and config hashes.
std::string fnv1a64_hex(const std::string& bytes);
std::string file_hash_hex(const fs::path& path);

}  // namespace gradmorph
