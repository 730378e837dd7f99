#pragma once

#include <string>
#include <vector>

#include "usr/tensor.hpp"

namespace usr::train {

// Binary checkpoint: magic "USRC", version u32 LE, entry count u32 LE; per
// entry name length u16 LE + UTF-8 name, dtype u8 (0 f32 / 1 f64), ndim u8,
// dims u32 LE each, row-major LE payload; trailing CRC32 (IEEE) of everything
// after the magic. Save->load->save is byte-identical.
inline constexpr char kCheckpointMagic[4] = {'U', 'S', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const std::vector<nn::Parameter>& params);

// Validates magic/CRC and per-entry name+shape agreement before touching any
// tensor; mismatches raise DataError naming the first offending entry.
void deserialize_checkpoint(const std::vector<unsigned char>& bytes,
                            std::vector<nn::Parameter>& params);

void save_checkpoint(const std::vector<nn::Parameter>& params, const std::string& path);
void load_checkpoint(const std::string& path, std::vector<nn::Parameter>& params);

}  // namespace usr::train
