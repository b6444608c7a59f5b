#include "pds/feature_file.hpp"

#include <cstring>
#include <fstream>

namespace pds {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'S', 'F'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T* v) {
  is.read(reinterpret_cast<char*>(v), sizeof(T));
  return static_cast<bool>(is);
}

}  // namespace

std::vector<int64_t> FeatureFile::frame_lengths() const {
  std::vector<int64_t> out;
  out.reserve(items.size());
  for (const Tensor& t : items) out.push_back(t.dim(0));
  return out;
}

void write_feature_file(const std::string& path, const FeatureFile& file) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put<uint16_t>(os, FeatureFile::kVersion);
  put<uint32_t>(os, static_cast<uint32_t>(file.items.size()));
  for (const Tensor& item : file.items) {
    if (item.rank() != 2) throw ConfigError("feature file: items must be [T,dim]");
    put<uint32_t>(os, static_cast<uint32_t>(item.dim(0)));
    put<uint32_t>(os, static_cast<uint32_t>(item.dim(1)));
    for (int64_t i = 0; i < item.numel(); ++i) put<float>(os, static_cast<float>(item[i]));
  }
  if (file.has_transcripts()) {
    if (file.transcript_lengths.size() != file.items.size())
      throw ConfigError("feature file: transcript table must match item count");
    put<uint32_t>(os, static_cast<uint32_t>(file.transcript_lengths.size()));
    for (int64_t l : file.transcript_lengths) put<uint32_t>(os, static_cast<uint32_t>(l));
  }
  if (!os) throw ConfigError("short write to '" + path + "'");
}

FeatureFile read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("'" + path + "' is not a PDSF feature file");
  uint16_t version = 0;
  if (!get(is, &version) || version != FeatureFile::kVersion)
    throw ConfigError("'" + path + "': unsupported version");
  uint32_t count = 0;
  if (!get(is, &count)) throw ConfigError("'" + path + "': truncated header");

  FeatureFile file;
  file.items.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t frames = 0, dim = 0;
    if (!get(is, &frames) || !get(is, &dim))
      throw ConfigError("'" + path + "': truncated item header");
    Tensor item({static_cast<int64_t>(frames), static_cast<int64_t>(dim)});
    for (int64_t j = 0; j < item.numel(); ++j) {
      float v = 0.0f;
      if (!get(is, &v)) throw ConfigError("'" + path + "': truncated item payload");
      item[j] = static_cast<double>(v);
    }
    file.items.push_back(std::move(item));
  }
  uint32_t transcript_count = 0;
  if (get(is, &transcript_count)) {
    if (transcript_count != count)
      throw ConfigError("'" + path + "': transcript table size mismatch");
    for (uint32_t i = 0; i < transcript_count; ++i) {
      uint32_t l = 0;
      if (!get(is, &l)) throw ConfigError("'" + path + "': truncated transcript table");
      file.transcript_lengths.push_back(static_cast<int64_t>(l));
    }
  }
  return file;
}

FeatureFile filter_feature_file(const FeatureFile& file, int64_t min_len, int64_t max_len,
                                int64_t* dropped) {
  FeatureFile out;
  int64_t removed = 0;
  for (size_t i = 0; i < file.items.size(); ++i) {
    const int64_t len = file.items[i].dim(0);
    if (len < min_len || len > max_len) {
      ++removed;
      continue;
    }
    out.items.push_back(file.items[i]);
    if (file.has_transcripts()) out.transcript_lengths.push_back(file.transcript_lengths[i]);
  }
  if (dropped) *dropped = removed;
  return out;
}

uint64_t feature_hash(const Tensor& features, const ValidMask& mask) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (int64_t i = 0; i < features.numel(); ++i) {
    const float v = static_cast<float>(features[i]);
    mix(&v, sizeof(v));
  }
  for (int64_t l : mask.lengths) {
    const uint32_t v = static_cast<uint32_t>(l);
    mix(&v, sizeof(v));
  }
  return h;
}

}  // namespace pds
