#include "cloudtomo/io/rig_io.hpp"

#include <fstream>

namespace cloudtomo::io {

Rig rig_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("cameras") && j["cameras"].is_array(), ErrorCode::format,
          "rig JSON must contain a cameras array");
  Rig rig;
  for (const auto& jc : j["cameras"]) {
    CameraModel cam;
    auto k = jc.at("K");
    auto r = jc.at("R");
    auto t = jc.at("t");
    require(k.size() == 9 && r.size() == 9 && t.size() == 3, ErrorCode::format,
            "camera K/R/t must have 9/9/3 entries");
    for (int i = 0; i < 9; ++i) {
      cam.K.m[i] = k.at(i).get<double>();
      cam.R.m[i] = r.at(i).get<double>();
    }
    cam.t = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    cam.width = jc.at("width").get<int>();
    cam.height = jc.at("height").get<int>();
    rig.cameras.push_back(cam);
  }
  rig.validate();
  return rig;
}

nlohmann::json rig_to_json(const Rig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& cam : rig.cameras) {
    nlohmann::json jc;
    jc["K"] = cam.K.m;
    jc["R"] = cam.R.m;
    jc["t"] = {cam.t.x, cam.t.y, cam.t.z};
    jc["width"] = cam.width;
    jc["height"] = cam.height;
    cams.push_back(jc);
  }
  return nlohmann::json{{"cameras", cams}};
}

Rig read_rig(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot read rig: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::format, "rig file is not valid JSON: " + path);
  return rig_from_json(j);
}

void write_rig(const std::string& path, const Rig& rig) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write rig: " + path);
  out << rig_to_json(rig).dump(2) << "\n";
}

}  // namespace cloudtomo::io
