#pragma once

#include <fstream>
#include <map>

#include <json.hpp>

#include "karma/nn/core.hpp"

namespace karma::nn {

inline constexpr int kCheckpointVersion = 1;

/// Named shaped arrays as JSON. Values are written through double, which
/// represents every float exactly, so float tensors round-trip bit for bit.
template <typename Scalar>
nlohmann::json tensors_to_json(const ParamList<Scalar>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : params) {
    std::vector<double> data(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      data[static_cast<std::size_t>(i)] = static_cast<double>(p->value.data()[i]);
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"data", std::move(data)}});
  }
  return tensors;
}

/// Loads values by name; every parameter must be present with its shape.
template <typename Scalar>
void tensors_from_json(const nlohmann::json& tensors, const ParamList<Scalar>& params) {
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& t : tensors) by_name[t.at("name").get<std::string>()] = &t;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw Error("checkpoint lacks tensor " + p->name);
    const auto& t = *it->second;
    if (t.at("rows").template get<Eigen::Index>() != p->value.rows() ||
        t.at("cols").template get<Eigen::Index>() != p->value.cols())
      throw Error("checkpoint tensor " + p->name + " has the wrong shape");
    const auto data = t.at("data").template get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(p->value.size()))
      throw Error("checkpoint tensor " + p->name + " has the wrong element count");
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] = static_cast<Scalar>(data[static_cast<std::size_t>(i)]);
    p->zero_grad();
  }
}

/// {"format", "version", "kind", "config", "tensors"}.
inline nlohmann::json make_checkpoint(const std::string& kind, nlohmann::json config,
                                      nlohmann::json tensors) {
  return {{"format", "karma-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", kind},
          {"config", std::move(config)},
          {"tensors", std::move(tensors)}};
}

inline const nlohmann::json& checkpoint_section(const nlohmann::json& doc, const std::string& kind,
                                                const char* section) {
  if (doc.value("format", std::string()) != "karma-checkpoint")
    throw Error("not a karma checkpoint");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw Error("unsupported checkpoint version");
  if (doc.value("kind", std::string()) != kind)
    throw Error("checkpoint holds a '" + doc.value("kind", std::string()) + "', expected '" +
                kind + "'");
  return doc.at(section);
}

inline void write_json_file(const nlohmann::json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

}  // namespace karma::nn
