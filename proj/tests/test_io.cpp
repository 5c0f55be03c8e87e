#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "cloudtomo/io/checkpoint.hpp"
#include "cloudtomo/io/gridfile.hpp"
#include "cloudtomo/io/image_io.hpp"
#include "cloudtomo/io/rig_io.hpp"
#include "cloudtomo/io/sha256.hpp"

using namespace cloudtomo;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("io");

namespace {

std::string tmpdir() {
  auto dir = fs::temp_directory_path() / "cloudtomo_io_tests";
  fs::create_directories(dir);
  return dir.string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(io::Sha256::of_bytes("", 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::Sha256::of_bytes("abc", 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string long_input(1000000, 'a');
  CHECK(io::Sha256::of_bytes(long_input.data(), long_input.size()) ==
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("grid file: write-read-write is byte identical") {
  GridSpec spec;
  spec.nx = 17;
  spec.ny = 9;
  spec.nz = 5;
  LwcGrid grid(spec);
  CounterRng rng(3);
  for (auto& v : grid.rho) v = double(float(rng.uniform(0, 1e-3)));

  std::string p1 = tmpdir() + "/a.grid", p2 = tmpdir() + "/b.grid";
  io::write_grid(p1, grid, {{"note", "round-trip"}});
  io::GridFile gf = io::read_grid(p1);
  CHECK(gf.meta.at("note") == "round-trip");
  CHECK(gf.grid.spec.nx == 17);
  io::write_grid(p2, gf.grid, gf.meta);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("grid file: float32 payload round-trips values exactly") {
  GridSpec spec;
  spec.nx = spec.ny = spec.nz = 4;
  LwcGrid grid(spec);
  CounterRng rng(5);
  for (auto& v : grid.rho) v = double(float(rng.uniform(0, 2e-3)));
  std::string path = tmpdir() + "/c.grid";
  io::write_grid(path, grid);
  io::GridFile gf = io::read_grid(path);
  for (size_t i = 0; i < grid.rho.size(); ++i) CHECK(gf.grid.rho[i] == grid.rho[i]);
}

TEST_CASE("grid file: truncated payload is a corrupt-file error") {
  GridSpec spec;
  spec.nx = spec.ny = spec.nz = 4;
  LwcGrid grid(spec);
  std::string path = tmpdir() + "/trunc.grid";
  io::write_grid(path, grid);
  auto bytes = slurp(path);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), std::streamsize(bytes.size() - 32));
  out.close();
  try {
    io::read_grid(path);
    FAIL("expected a corrupt-file error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt_file);
  }
}

TEST_CASE("grid file: bad magic is a format error") {
  std::string path = tmpdir() + "/junk.grid";
  std::ofstream(path, std::ios::binary) << "not a grid at all";
  try {
    io::read_grid(path);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
}

TEST_CASE("pfm round-trip") {
  optics::HdrImage img(13, 7);
  CounterRng rng(8);
  for (auto& v : img.data) v = float(rng.uniform(0, 30));
  std::string path = tmpdir() + "/img.pfm";
  io::write_pfm(path, img);
  optics::HdrImage back = io::read_pfm(path);
  REQUIRE(back.width == 13);
  REQUIRE(back.height == 7);
  CHECK(std::equal(img.data.begin(), img.data.end(), back.data.begin()));
}

TEST_CASE("png writer emits a parseable signature and dimensions") {
  optics::HdrImage img(9, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 9; ++x) img.at(0, y, x) = float(x) / 8.f;
  std::string path = tmpdir() + "/img.png";
  io::write_png_rgb8(path, img);
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 33);
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  for (int i = 0; i < 8; ++i) CHECK(uint8_t(bytes[size_t(i)]) == sig[i]);
  // IHDR width/height live at fixed offsets.
  auto be32 = [&](size_t off) {
    return (uint32_t(uint8_t(bytes[off])) << 24) | (uint32_t(uint8_t(bytes[off + 1])) << 16) |
           (uint32_t(uint8_t(bytes[off + 2])) << 8) | uint32_t(uint8_t(bytes[off + 3]));
  };
  CHECK(be32(16) == 9);
  CHECK(be32(20) == 5);
}

TEST_CASE("rig json round-trip and validation") {
  nlohmann::json j = {
      {"cameras",
       {{{"K", {100.0, 0, 32, 0, 100.0, 32, 0, 0, 1}},
         {"R", {1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0}},
         {"t", {0.0, 0.0, 0.0}},
         {"width", 64},
         {"height", 64}}}}};
  Rig rig = io::rig_from_json(j);
  REQUIRE(rig.size() == 1);
  std::string path = tmpdir() + "/rig.json";
  io::write_rig(path, rig);
  Rig back = io::read_rig(path);
  CHECK(back.cameras[0].K(0, 0) == 100.0);

  nlohmann::json bad = j;
  bad["cameras"][0]["R"] = {1.0, 0.1, 0, 0, 1.0, 0, 0, 0, 1.0};
  CHECK_THROWS_AS(io::rig_from_json(bad), Error);
}

TEST_CASE("checkpoint: bit-exact tensor round-trip") {
  nn::ParamStore store(11);
  store.add_kaiming("a.w", {4, 3}, 3);
  store.add_kaiming("b.w", {2, 2, 3, 3}, 18);
  store.add_zeros("b.b", {2});

  io::Checkpoint ckpt = io::checkpoint_from_store(store, {{"step", 12}, {"seed", 11}});
  std::string p1 = tmpdir() + "/m.ckpt", p2 = tmpdir() + "/m2.ckpt";
  io::write_checkpoint(p1, ckpt);
  io::Checkpoint back = io::read_checkpoint(p1);
  CHECK(back.meta.at("step") == 12);
  for (const auto& [name, t] : ckpt.tensors) {
    REQUIRE(back.tensors.count(name));
    const auto& u = back.tensors.at(name);
    REQUIRE(u.shape == t.shape);
    CHECK(std::equal(t.data.begin(), t.data.end(), u.data.begin()));
  }
  io::write_checkpoint(p2, back);
  CHECK(slurp(p1) == slurp(p2));

  nn::ParamStore other(99);
  other.add_kaiming("a.w", {4, 3}, 3);
  other.add_kaiming("b.w", {2, 2, 3, 3}, 18);
  other.add_zeros("b.b", {2});
  io::load_into_store(back, other);
  for (const auto& [name, var] : store.params) {
    const auto& loaded = other.at(name)->value;
    CHECK(std::equal(var->value.data.begin(), var->value.data.end(), loaded.data.begin()));
  }
}

TEST_CASE("checkpoint: missing tensor is a format error") {
  nn::ParamStore store(1);
  store.add_zeros("x", {2});
  io::Checkpoint ckpt = io::checkpoint_from_store(store, {});
  nn::ParamStore bigger(1);
  bigger.add_zeros("x", {2});
  bigger.add_zeros("y", {2});
  try {
    io::load_into_store(ckpt, bigger);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
}

TEST_SUITE_END();
