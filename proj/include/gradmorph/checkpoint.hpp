#pragma once

#include <filesystem>

#include "gradmorph/segnet.hpp"
#include "gradmorph/translator.hpp"

namespace gradmorph {

// Shared binary checkpoint format (little-endian):
//   magic "GMCK", u32 version=1, u32 config_len, config JSON (carries the
//   model kind), u32 param_count, then per parameter:
//   u32 name_len, name, u32 rank, u64 dims[rank], f64 data.
// Round-trips bit-exactly.

void save_segnet(const std::filesystem::path& path, const SegModel& model);
SegModel load_segnet(const std::filesystem::path& path);

void save_translator(const std::filesystem::path& path, const TranslatorModel& model);
TranslatorModel load_translator(const std::filesystem::path& path);

}  // namespace gradmorph
