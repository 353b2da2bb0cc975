#include "train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "common/error.hpp"

namespace sologan {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};

uint64_t fnv1a(const uint8_t* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void append_pod(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(const std::string& buf, size_t& off, const std::string& path) {
  require(off + sizeof(T) <= buf.size(), ErrorCode::checkpoint_corrupt,
          "truncated checkpoint file " + path);
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const CheckpointBundle& bundle, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  append_pod<uint32_t>(buf, kCheckpointFormatVersion);

  std::string meta = bundle.meta.dump();
  append_pod<uint64_t>(buf, meta.size());
  buf.append(meta);

  append_pod<uint64_t>(buf, bundle.arrays.size());
  for (const auto& [name, tensor] : bundle.arrays) {
    append_pod<uint32_t>(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    append_pod<uint32_t>(buf, static_cast<uint32_t>(tensor.ndim()));
    for (int i = 0; i < tensor.ndim(); ++i) append_pod<int64_t>(buf, tensor.dim(i));
    buf.append(reinterpret_cast<const char*>(tensor.data()),
               static_cast<size_t>(tensor.numel()) * sizeof(float));
  }

  uint64_t digest = fnv1a(reinterpret_cast<const uint8_t*>(buf.data()), buf.size());
  append_pod<uint64_t>(buf, digest);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io, "cannot open checkpoint path for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  require(out.good(), ErrorCode::io, "failed to write checkpoint " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open checkpoint file " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  require(buf.size() >= sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t),
          ErrorCode::checkpoint_corrupt, "checkpoint file too small: " + path);
  require(std::memcmp(buf.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::checkpoint_corrupt,
          "bad checkpoint magic in " + path);

  uint64_t stored_digest;
  std::memcpy(&stored_digest, buf.data() + buf.size() - sizeof(uint64_t), sizeof(uint64_t));
  uint64_t digest =
      fnv1a(reinterpret_cast<const uint8_t*>(buf.data()), buf.size() - sizeof(uint64_t));
  require(digest == stored_digest, ErrorCode::checkpoint_corrupt,
          "checkpoint checksum mismatch in " + path);

  size_t off = sizeof(kMagic);
  uint32_t version = read_pod<uint32_t>(buf, off, path);
  require(version == kCheckpointFormatVersion, ErrorCode::checkpoint_version,
          "unsupported checkpoint format version " + std::to_string(version) + " in " + path +
              " (expected " + std::to_string(kCheckpointFormatVersion) + ")");

  CheckpointBundle bundle;
  uint64_t meta_len = read_pod<uint64_t>(buf, off, path);
  require(off + meta_len <= buf.size(), ErrorCode::checkpoint_corrupt,
          "truncated checkpoint metadata in " + path);
  try {
    bundle.meta = nlohmann::json::parse(buf.substr(off, meta_len));
  } catch (const nlohmann::json::parse_error&) {
    raise(ErrorCode::checkpoint_corrupt, "corrupt checkpoint metadata in " + path);
  }
  off += meta_len;

  uint64_t n_arrays = read_pod<uint64_t>(buf, off, path);
  for (uint64_t i = 0; i < n_arrays; ++i) {
    uint32_t name_len = read_pod<uint32_t>(buf, off, path);
    require(off + name_len <= buf.size(), ErrorCode::checkpoint_corrupt,
            "truncated checkpoint entry name in " + path);
    std::string name = buf.substr(off, name_len);
    off += name_len;
    uint32_t ndim = read_pod<uint32_t>(buf, off, path);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int64_t>(buf, off, path);
    int64_t numel = shape_numel(shape);
    require(numel >= 0 && off + static_cast<size_t>(numel) * sizeof(float) <= buf.size(),
            ErrorCode::checkpoint_corrupt, "truncated checkpoint array '" + name + "' in " + path);
    std::vector<float> data(static_cast<size_t>(numel));
    std::memcpy(data.data(), buf.data() + off, data.size() * sizeof(float));
    off += data.size() * sizeof(float);
    bundle.arrays.emplace(std::move(name), Tensor<float>::from_data(shape, std::move(data)));
  }
  require(off + sizeof(uint64_t) == buf.size(), ErrorCode::checkpoint_corrupt,
          "trailing garbage in checkpoint " + path);
  return bundle;
}

}  // namespace sologan
