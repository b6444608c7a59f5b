#pragma once

#include <string>
#include <vector>

#include "pds/tensor.hpp"

namespace pds {

// Binary feature container. Layout, all little-endian:
//   magic "PDSF", version u16, item count u32,
//   per item: frame count u32, dim u32, frame*dim float32 row-major,
//   then optionally: u32 count (must equal item count) + count u32
//   transcript lengths.
struct FeatureFile {
  static constexpr uint16_t kVersion = 1;

  std::vector<Tensor> items;                // each [T, dim]
  std::vector<int64_t> transcript_lengths;  // empty when absent

  bool has_transcripts() const { return !transcript_lengths.empty(); }
  std::vector<int64_t> frame_lengths() const;
};

void write_feature_file(const std::string& path, const FeatureFile& file);
FeatureFile read_feature_file(const std::string& path);

// Ingestion rule: drop items shorter than 5 or longer than 3000 frames.
FeatureFile filter_feature_file(const FeatureFile& file, int64_t min_len = 5,
                                int64_t max_len = 3000, int64_t* dropped = nullptr);

// FNV-1a over the packed float32 payload and lengths; used to pin down that
// benchmark configs consumed identical inputs.
uint64_t feature_hash(const Tensor& features, const ValidMask& mask);

}  // namespace pds
