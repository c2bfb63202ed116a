#include <doctest.h>
#include <zlib.h>

#include <cstring>
#include <filesystem>

#include "tbscreen/baselines.hpp"
#include "tbscreen/checkpoint.hpp"
#include "tbscreen/error.hpp"

using namespace tbscreen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tbscreen_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

CapsNetConfig small_caps() {
  CapsNetConfig c;
  c.input_side = 32;
  c.conv1_channels = 4;
  c.conv1_stride = 1;
  c.primary_caps_channels = 2;
  c.primary_caps_dim = 4;
  c.class_caps_dim = 4;
  return c;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

// Recomputes the trailing CRC-32 so that a deliberate edit reaches the parser.
void reseal(std::vector<std::uint8_t>& b) {
  const auto crc = crc32(0L, b.data(), static_cast<uInt>(b.size() - 4));
  put_u32(b, b.size() - 4, static_cast<std::uint32_t>(crc));
}

}  // namespace

TEST_CASE("capsule network round trip is bit exact") {
  const CapsNetModel model(small_caps(), init_params(small_caps(), 3));
  const TrainingMetadata meta{3, 12, 0.0421};
  const auto path = scratch("caps.ckpt");
  save_checkpoint(to_checkpoint(model, meta), path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(bit_identical(loaded, to_checkpoint(model, meta)));
  CHECK(loaded.family == "capsnet");
  CHECK(loaded.metadata == meta);

  const CapsNetModel back = capsnet_from(loaded);
  REQUIRE(back.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& a = model.parameters()[i].value.data();
    const auto& b = back.parameters()[i].value.data();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  CHECK(back.config().to_map() == model.config().to_map());
}

TEST_CASE("baseline and logistic round trips") {
  const auto lenet = build_baseline(BaselineConfig::defaults(BaselineFamily::lenet), 4);
  const auto ck = decode_checkpoint(encode_checkpoint(to_checkpoint(lenet, {})));
  const auto model = patch_model_from(ck);
  CHECK(model->family() == "lenet");
  CHECK(model->parameters().size() == lenet.parameters().size());

  LogisticBundle bundle;
  bundle.model = {{-1.25, 3.5}, 0.125};
  bundle.image_w = 3840;
  bundle.image_h = 2700;
  const auto lb = logistic_from(decode_checkpoint(encode_checkpoint(to_checkpoint(bundle, {}))));
  CHECK(lb.model.weights == bundle.model.weights);
  CHECK(lb.model.bias == bundle.model.bias);
  CHECK(lb.image_w == 3840);
  CHECK(lb.downsample == 4);
}

TEST_CASE("family mismatch is rejected") {
  const auto lenet = build_baseline(BaselineConfig::defaults(BaselineFamily::lenet), 4);
  const auto ck = to_checkpoint(lenet, {});
  CHECK_THROWS_AS(capsnet_from(ck), FamilyMismatchError);
  CHECK_THROWS_AS(logistic_from(ck), FamilyMismatchError);
  LogisticBundle bundle;
  bundle.model = {{0.0, 0.0}, 0.0};
  CHECK_THROWS_AS(patch_model_from(to_checkpoint(bundle, {})), FamilyMismatchError);
}

TEST_CASE("every single-byte corruption is detected") {
  const CapsNetModel model(small_caps(), init_params(small_caps(), 5));
  const auto good = encode_checkpoint(to_checkpoint(model, {}));
  // Every byte is covered either by the CRC or by the header checks.
  for (std::size_t i = 0; i < good.size(); i += 97) {
    auto bad = good;
    bad[i] ^= 0x01;
    CHECK_THROWS_AS(decode_checkpoint(bad), Error);
  }
  auto bad = good;
  bad[good.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(bad), ChecksumError);
}

TEST_CASE("truncation, version and format errors are distinct") {
  const auto lenet = build_baseline(BaselineConfig::defaults(BaselineFamily::lenet), 6);
  const auto good = encode_checkpoint(to_checkpoint(lenet, {}));

  const std::vector<std::uint8_t> cut(good.begin(), good.begin() + good.size() / 2);
  CHECK_THROWS_AS(decode_checkpoint(cut), TruncatedError);
  const std::vector<std::uint8_t> tiny(good.begin(), good.begin() + 5);
  CHECK_THROWS_AS(decode_checkpoint(tiny), TruncatedError);

  const auto future = encode_checkpoint(to_checkpoint(lenet, {}), kCheckpointVersion + 1);
  try {
    decode_checkpoint(future);
    FAIL("expected a version error");
  } catch (const VersionError& e) {
    CHECK(std::string(e.what()).find(std::to_string(kCheckpointVersion + 1)) != std::string::npos);
  }

  auto magic = good;
  magic[0] = 'X';
  reseal(magic);
  CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);

  CHECK_THROWS_AS(load_checkpoint(scratch("absent.ckpt")), IoError);
}
