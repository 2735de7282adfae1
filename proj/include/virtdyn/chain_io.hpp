// Copyright 2026 The virtdyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "virtdyn/chain.hpp"

// JSON form of a chain:
//
//   {
//     "name": "ur10",
//     "joints": [ {"name": "...", "type": "revolute",
//                  "origin": {"xyz": [x, y, z], "rpy": [r, p, y]}, "axis": [x, y, z]}, ... ],
//     "links":  [ {"mass": m, "com": [x, y, z], "inertia": [[..], [..], [..]]}, ... ],
//     "tool":   {"xyz": [x, y, z], "rpy": [r, p, y]}
//   }

namespace virtdyn {

namespace detail {

inline Vector3 read_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw InvalidArgument(std::string("chain json: '") + what + "' must be a 3-array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json write_vec3(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

inline Transform read_origin(const nlohmann::json& j) {
  const Vector3 xyz = j.contains("xyz") ? read_vec3(j.at("xyz"), "xyz") : Vector3::Zero();
  const Vector3 rpy = j.contains("rpy") ? read_vec3(j.at("rpy"), "rpy") : Vector3::Zero();
  return make_transform(xyz, rpy);
}

inline nlohmann::json write_origin(const Transform& t) {
  return {{"xyz", write_vec3(t.translation())}, {"rpy", write_vec3(rotation_to_rpy(t.linear()))}};
}

}  // namespace detail

inline KinematicChain chain_from_json(const nlohmann::json& j) {
  try {
    std::vector<JointDescriptor> joints;
    for (const auto& jj : j.at("joints")) {
      JointDescriptor joint;
      joint.name = jj.value("name", std::string{});
      if (jj.value("type", std::string("revolute")) != "revolute") {
        throw InvalidArgument("chain json: only revolute joints are supported");
      }
      joint.origin = detail::read_origin(jj.value("origin", nlohmann::json::object()));
      joint.axis = detail::read_vec3(jj.at("axis"), "axis");
      joints.push_back(std::move(joint));
    }
    std::vector<LinkInertia> links;
    for (const auto& lj : j.at("links")) {
      LinkInertia link;
      link.mass = lj.at("mass").get<double>();
      link.com = lj.contains("com") ? detail::read_vec3(lj.at("com"), "com") : Vector3::Zero();
      const auto& in = lj.at("inertia");
      if (!in.is_array() || in.size() != 3) {
        throw InvalidArgument("chain json: 'inertia' must be a 3x3 array");
      }
      for (int r = 0; r < 3; ++r) link.rot_inertia.row(r) = detail::read_vec3(in[r], "inertia");
      links.push_back(link);
    }
    const Transform tool = j.contains("tool") ? detail::read_origin(j.at("tool"))
                                              : Transform::Identity();
    return KinematicChain(std::move(joints), std::move(links), tool,
                          j.value("name", std::string{}));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("chain json: ") + e.what());
  }
}

inline nlohmann::json chain_to_json(const KinematicChain& chain) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& jd : chain.joints()) {
    joints.push_back({{"name", jd.name},
                      {"type", "revolute"},
                      {"origin", detail::write_origin(jd.origin)},
                      {"axis", detail::write_vec3(jd.axis)}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : chain.links()) {
    nlohmann::json inertia = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) inertia.push_back(detail::write_vec3(l.rot_inertia.row(r)));
    links.push_back({{"mass", l.mass}, {"com", detail::write_vec3(l.com)}, {"inertia", inertia}});
  }
  return {{"name", chain.name()},
          {"joints", joints},
          {"links", links},
          {"tool", detail::write_origin(chain.tool())}};
}

inline KinematicChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open chain file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("chain file " + path.string() + ": " + e.what());
  }
  return chain_from_json(j);
}

inline void save_chain(const KinematicChain& chain, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write chain file " + path.string());
  out << chain_to_json(chain).dump(2) << '\n';
}

}  // namespace virtdyn
