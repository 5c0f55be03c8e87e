#include "cloudtomo/io/gridfile.hpp"

#include <bit>
#include <fstream>

namespace cloudtomo::io {

static_assert(std::endian::native == std::endian::little,
              "grid container assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'C', 'T', 'G', '1'};
}

void write_grid(const std::string& path, const LwcGrid& grid, const nlohmann::json& meta) {
  grid.spec.validate();
  require(grid.rho.size() == grid.spec.num_voxels(), ErrorCode::invalid_argument,
          "grid payload does not match dims");

  nlohmann::json header{
      {"dims", {grid.spec.nx, grid.spec.ny, grid.spec.nz}},
      {"voxel_size", {grid.spec.voxel.x, grid.spec.voxel.y, grid.spec.voxel.z}},
      {"origin", {grid.spec.origin.x, grid.spec.origin.y, grid.spec.origin.z}},
      {"units", "kg_m3"},
      {"dtype", "f32le"},
      {"order", "xyz"},
  };
  if (!meta.empty()) header["meta"] = meta;
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out.write(kMagic, 4);
  uint32_t hlen = uint32_t(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), std::streamsize(hs.size()));
  std::vector<float> payload(grid.rho.begin(), grid.rho.end());
  out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size() * 4));
  require(out.good(), ErrorCode::io, "short write: " + path);
}

GridFile read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::equal(magic, magic + 4, kMagic), ErrorCode::format,
          "not a grid file: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  require(in.gcount() == 4, ErrorCode::corrupt_file, "truncated grid header: " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  require(in.gcount() == std::streamsize(hlen), ErrorCode::corrupt_file,
          "truncated grid header: " + path);

  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  require(!header.is_discarded(), ErrorCode::corrupt_file, "bad grid header JSON: " + path);
  require(header.value("dtype", "") == "f32le", ErrorCode::format,
          "unsupported grid dtype in " + path);
  require(header.value("order", "") == "xyz", ErrorCode::format,
          "unsupported grid ordering in " + path);
  require(header.value("units", "") == "kg_m3", ErrorCode::format,
          "unsupported grid units in " + path);

  GridFile gf;
  auto dims = header.at("dims");
  auto vs = header.at("voxel_size");
  auto org = header.at("origin");
  GridSpec spec;
  spec.nx = dims.at(0).get<int>();
  spec.ny = dims.at(1).get<int>();
  spec.nz = dims.at(2).get<int>();
  spec.voxel = {vs.at(0).get<double>(), vs.at(1).get<double>(), vs.at(2).get<double>()};
  spec.origin = {org.at(0).get<double>(), org.at(1).get<double>(), org.at(2).get<double>()};
  spec.validate();
  gf.meta = header.value("meta", nlohmann::json::object());

  gf.grid = LwcGrid(spec);
  std::vector<float> payload(spec.num_voxels());
  in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size() * 4));
  require(in.gcount() == std::streamsize(payload.size() * 4), ErrorCode::corrupt_file,
          "grid payload length mismatch: " + path);
  in.peek();
  require(in.eof(), ErrorCode::corrupt_file, "trailing bytes in grid file: " + path);
  std::copy(payload.begin(), payload.end(), gf.grid.rho.begin());
  return gf;
}

}  // namespace cloudtomo::io
