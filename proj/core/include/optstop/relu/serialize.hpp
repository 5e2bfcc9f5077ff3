#pragma once

// Portable binary container for networks.
//
//   offset 0   8 bytes  magic "OSRELUNN"
//   offset 8   u32      format version (1)
//   offset 12  u32      layout: 0 = dense row-major blocks, 1 = sparse triplets
//   u64 L, then u64 N_0 ... N_L
//   per layer: weights (dense: N_l*N_{l-1} f64 row-major; sparse: u64 nnz then
//              nnz * (u64 row, u64 col, f64 value) in row-major order),
//              then N_l f64 bias
//   u8 has_metadata; if 1: u64 declared_size, f64 lipschitz (NaN = unknown),
//              u64 length + provenance bytes
//
// All integers and floats little-endian. Doubles are copied bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "optstop/relu/network.hpp"

namespace optstop::relu {

enum class Layout : std::uint32_t { dense = 0, sparse = 1 };

struct NetworkMetadata {
  std::uint64_t declared_size = 0;
  std::optional<double> lipschitz;
  std::string provenance;

  bool operator==(const NetworkMetadata&) const = default;
};

struct StoredNetwork {
  NeuralNetwork network;
  std::optional<NetworkMetadata> metadata;
};

/// Dense layout unless the dense payload would exceed `dense_limit_bytes`.
Layout choose_layout(const NeuralNetwork& net, std::uint64_t dense_limit_bytes = 64ull << 20);

std::vector<std::uint8_t> serialize(const NeuralNetwork& net,
                                    const std::optional<NetworkMetadata>& meta = std::nullopt,
                                    std::optional<Layout> layout = std::nullopt);
StoredNetwork deserialize(const std::vector<std::uint8_t>& bytes);

void save_network(const std::filesystem::path& path, const NeuralNetwork& net,
                  const std::optional<NetworkMetadata>& meta = std::nullopt,
                  std::optional<Layout> layout = std::nullopt);
StoredNetwork load_network(const std::filesystem::path& path);

/// True when both networks have identical dims and bit-identical parameters.
bool bitwise_equal(const NeuralNetwork& a, const NeuralNetwork& b);

}  // namespace optstop::relu
