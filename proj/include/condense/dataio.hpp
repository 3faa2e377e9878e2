#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "condense/adam.hpp"
#include "condense/netgraph.hpp"

namespace condense {

// Mask: 3 one-hot class planes in {0,1}. Image: the rendered counterpart in
// [-1,1], matching the generator's tanh head.
struct PairedSample {
  Tensor mask;   // 1x3xHxW
  Tensor image;  // 1x3xHxW
};

// Deterministic mask->image pairs: 1-3 random rectangles/ellipses per sample,
// each class filled with a fixed color shaded radially from the shape center.
std::vector<PairedSample> gen_synthetic_pairs(uint64_t seed, int n, int size);

struct Checkpoint {
  NetworkGraph graph;
  std::optional<AdamState> optimizer;
  uint64_t seed = 0;
  std::map<std::string, std::string> metadata;  // config digest, run settings
};

// Binary format: 8-byte magic, u32 version, seed, metadata, topology, weight
// tensors, optional optimizer state; everything little-endian and
// length-prefixed. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct ReportTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated, LF newlines, deterministic; one header row.
void write_report(const std::string& path, const ReportTable& table);

std::string format_real(double v);
std::string format_int(int64_t v);

// FNV-1a over a canonical string; used as the checkpoint config digest.
std::string digest_hex(const std::string& payload);

}  // namespace condense
