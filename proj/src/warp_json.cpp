#include "flk/warp_json.hpp"

namespace flk {

nlohmann::json warp_to_json(const AffineWarp& w) {
  nlohmann::json p = nlohmann::json::array();
  for (int i = 0; i < 6; ++i) p.push_back(w.params()(i));
  return {{"kind", to_string(w.kind())}, {"p", p}};
}

AffineWarp warp_from_json(const nlohmann::json& j) {
  try {
    const WarpKind kind = warp_kind_from_string(j.at("kind").get<std::string>());
    const auto& p = j.at("p");
    if (!p.is_array() || p.size() != 6) {
      throw Error(ErrorCode::invalid_argument, "warp JSON needs a 6-element \"p\" array");
    }
    AffineWarp::Params params;
    for (int i = 0; i < 6; ++i) params(i) = p[i].get<double>();
    return AffineWarp(kind, params);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed warp JSON: ") + e.what());
  }
}

}  // namespace flk
