#pragma once

#include "leand/detector.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace leand {

/// Current on-disk format version. Readers reject newer versions.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary: an 8-byte magic, a version, then tagged sections
/// (scaler, autoencoder, feature map, density, scalars). Doubles are stored
/// by bit pattern, so a round trip is exact.
std::string serialize(const LeandModel& model);
LeandModel deserialize(std::string_view bytes);

void save_model(const LeandModel& model, const std::filesystem::path& path);
LeandModel load_model(const std::filesystem::path& path);

}  // namespace leand
