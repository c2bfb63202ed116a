#include "tbscreen/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "config_util.hpp"
#include "tbscreen/baselines.hpp"
#include "tbscreen/dataset.hpp"
#include "tbscreen/error.hpp"

namespace tbscreen {

namespace {

constexpr std::array<std::uint8_t, 8> kMagic = {'T', 'B', 'S', 'C', 'K', 'P', 'T', 0};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;
constexpr std::size_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint payload is inconsistent");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck, std::uint32_t version) {
  Writer payload;
  payload.str(ck.family);
  payload.uint(static_cast<std::uint32_t>(ck.config.size()));
  for (const auto& [k, v] : ck.config) {
    payload.str(k);
    payload.str(v);
  }
  payload.uint(ck.metadata.seed);
  payload.uint(ck.metadata.epochs);
  payload.f64(ck.metadata.final_loss);
  payload.uint(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    payload.str(t.name);
    payload.uint(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) payload.uint(static_cast<std::uint64_t>(d));
    for (double v : t.value.data()) payload.f64(v);
  }

  Writer out;
  out.bytes(kMagic.data(), kMagic.size());
  out.uint(version);
  out.uint(static_cast<std::uint64_t>(payload.buffer().size()));
  out.bytes(payload.buffer().data(), payload.buffer().size());
  out.uint(crc_of(out.buffer()));
  return std::move(out.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) throw TruncatedError("checkpoint is truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("not a checkpoint file (bad magic)");
  if (bytes.size() < kHeaderSize + 4) throw TruncatedError("checkpoint is truncated");
  Reader header(bytes.subspan(8, 12));
  const auto version = header.uint<std::uint32_t>();
  const auto payload_len = header.uint<std::uint64_t>();
  if (payload_len > bytes.size() - kHeaderSize - 4)
    throw TruncatedError("checkpoint is truncated: expected " + std::to_string(payload_len) +
                         " payload bytes");
  if (payload_len < bytes.size() - kHeaderSize - 4)
    throw FormatError("checkpoint has trailing bytes");
  const std::size_t body = kHeaderSize + payload_len;
  Reader trailer(bytes.subspan(body, 4));
  if (trailer.uint<std::uint32_t>() != crc_of(bytes.first(body)))
    throw ChecksumError("checkpoint checksum mismatch");
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");

  Reader r(bytes.subspan(kHeaderSize, payload_len));
  Checkpoint ck;
  ck.family = r.str();
  const auto n_config = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    auto k = r.str();
    ck.config[k] = r.str();
  }
  ck.metadata.seed = r.uint<std::uint64_t>();
  ck.metadata.epochs = r.uint<std::uint64_t>();
  ck.metadata.final_loss = r.f64();
  const auto n_tensors = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rank = r.uint<std::uint32_t>();
    if (rank == 0 || rank > kMaxRank) throw FormatError("checkpoint tensor '" + t.name + "' has bad rank");
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.uint<std::uint64_t>());
      if (d == 0 || d > payload_len) throw FormatError("checkpoint tensor '" + t.name + "' has bad extent");
      count *= d;
      if (count > payload_len) throw FormatError("checkpoint tensor '" + t.name + "' is too large");
    }
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    t.value = Tensor(std::move(shape), std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint payload has unread bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint to_checkpoint(const PatchModel& model, const TrainingMetadata& metadata) {
  return {model.family(), model.config_map(), metadata, model.parameters()};
}

std::unique_ptr<PatchModel> patch_model_from(const Checkpoint& ck) {
  if (ck.family == CapsNetModel::kFamily)
    return std::make_unique<CapsNetModel>(CapsNetConfig::from_map(ck.config), ck.tensors);
  if (ck.family == "lenet" || ck.family == "alexnet_mini" || ck.family == "vgg_mini") {
    auto config = BaselineConfig::from_map(ck.config);
    if (family_name(config.family) != ck.family)
      throw FormatError("checkpoint family tag disagrees with its config");
    return std::make_unique<BaselineModel>(std::move(config), ck.tensors);
  }
  throw FamilyMismatchError("checkpoint holds '" + ck.family + "', not a patch classifier");
}

CapsNetModel capsnet_from(const Checkpoint& ck) {
  if (ck.family != CapsNetModel::kFamily)
    throw FamilyMismatchError("checkpoint holds '" + ck.family + "', expected capsnet");
  return CapsNetModel(CapsNetConfig::from_map(ck.config), ck.tensors);
}

Checkpoint to_checkpoint(const LogisticBundle& b, const TrainingMetadata& metadata) {
  Checkpoint ck;
  ck.family = LogisticBundle::kFamily;
  ck.config = {{"bins", std::to_string(b.bins)},
               {"image_w", std::to_string(b.image_w)},
               {"image_h", std::to_string(b.image_h)},
               {"patch_side", std::to_string(b.patch_side)},
               {"overlap", std::to_string(b.overlap)},
               {"downsample", std::to_string(b.downsample)}};
  ck.metadata = metadata;
  ck.tensors.push_back({"weights", Tensor({b.model.weights.size()}, b.model.weights)});
  ck.tensors.push_back({"bias", Tensor::scalar(b.model.bias)});
  return ck;
}

LogisticBundle logistic_from(const Checkpoint& ck) {
  if (ck.family != LogisticBundle::kFamily)
    throw FamilyMismatchError("checkpoint holds '" + ck.family + "', expected logistic");
  LogisticBundle b;
  b.bins = detail::get_size(ck.config, "bins");
  b.image_w = detail::get_size(ck.config, "image_w");
  b.image_h = detail::get_size(ck.config, "image_h");
  b.patch_side = detail::get_size(ck.config, "patch_side");
  b.overlap = detail::get_size(ck.config, "overlap");
  b.downsample = detail::get_size(ck.config, "downsample");
  if (ck.tensors.size() != 2 || ck.tensors[0].name != "weights" || ck.tensors[1].name != "bias" ||
      ck.tensors[0].value.size() != b.bins || ck.tensors[1].value.size() != 1)
    throw FormatError("logistic checkpoint tensors do not match its config");
  b.model.weights = ck.tensors[0].value.values();
  b.model.bias = ck.tensors[1].value[0];
  return b;
}

bool bit_identical(const Checkpoint& a, const Checkpoint& b) {
  return encode_checkpoint(a) == encode_checkpoint(b);
}

}  // namespace tbscreen
