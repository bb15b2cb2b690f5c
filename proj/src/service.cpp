#include "karma/service.hpp"

#include <cmath>

#include <httplib.h>

namespace karma {

namespace {

ServiceResponse reply(int status, const nlohmann::json& body) { return {status, body.dump()}; }

struct BadRequest : Error {
  using Error::Error;
};

}  // namespace

DecisionService::DecisionService(DtModel model, EstimatorModel estimator, int history_window)
    : model_(std::move(model)), estimator_(std::move(estimator)),
      history_window_(history_window) {
  if (history_window < 1) throw ConfigError("history window must be at least 1");
  manifests_.emplace("builtin", VideoManifest::standard());
}

void DecisionService::add_manifest(const std::string& name, const VideoManifest& manifest) {
  manifest.validate();
  manifests_[name] = manifest;
}

ServiceResponse DecisionService::handle(const std::string& body) {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return reply(400, {{"error", std::string("request is not JSON: ") + e.what()}});
  }

  TrajectoryWindow window(model_.config().shape.context_len);
  std::vector<double> throughputs;
  Observation newest_obs;
  int newest_t = 0;
  try {
    if (!request.is_object()) throw BadRequest("request must be a JSON object");
    for (const char* key : {"window", "ladder", "manifest_ref"})
      if (!request.contains(key)) throw BadRequest(std::string("missing field \"") + key + "\"");

    const auto ref = request.at("manifest_ref").get<std::string>();
    const auto found = manifests_.find(ref);
    if (found == manifests_.end()) throw BadRequest("unknown manifest_ref \"" + ref + "\"");
    const auto ladder = request.at("ladder").get<std::vector<double>>();
    if (ladder != found->second.ladder.levels())
      throw BadRequest("ladder does not match manifest \"" + ref + "\"");
    if (static_cast<int>(ladder.size()) != model_.config().shape.action_count)
      throw BadRequest("ladder size does not match the model");

    const auto& steps = request.at("window");
    if (!steps.is_array() || steps.empty()) throw BadRequest("window must be a non-empty array");
    const std::size_t keep = std::min<std::size_t>(steps.size(), static_cast<std::size_t>(window.capacity()));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& s = steps[i];
      const bool newest = i + 1 == steps.size();
      if (!s.contains("t") || !s.contains("observation"))
        throw BadRequest("window entry " + std::to_string(i) + " needs \"t\" and \"observation\"");
      Observation obs;
      try {
        obs = observation_from_json(s.at("observation"));
      } catch (const nlohmann::json::exception&) {
        throw BadRequest("window entry " + std::to_string(i) + " has an incomplete observation");
      }
      if (obs.next_sizes_bytes.size() != ladder.size())
        throw BadRequest("window entry " + std::to_string(i) + " has next_sizes_bytes of the wrong length");
      if (obs.download_s > 0.0) throughputs.push_back(obs.throughput_mbps);
      if (i + keep < steps.size()) continue;
      const int t = s.at("t").get<int>();
      if (t < 0 || t >= model_.config().shape.max_timestep)
        throw BadRequest("window entry " + std::to_string(i) + " has timestep out of range");
      if (newest) {
        if (s.contains("action")) throw BadRequest("newest window entry must not carry an action");
        if (!window.empty() && t != window.steps().back().timestep + 1)
          throw BadRequest("window timesteps must be consecutive");
        newest_obs = std::move(obs);
        newest_t = t;
      } else {
        if (!s.contains("action") || !s.contains("r_hat"))
          throw BadRequest("window entry " + std::to_string(i) + " needs \"r_hat\" and \"action\"");
        const int action = s.at("action").get<int>();
        if (action < 0 || action >= static_cast<int>(ladder.size()))
          throw BadRequest("window entry " + std::to_string(i) + " has an action outside the ladder");
        window.append(t, std::move(obs), s.at("r_hat").get<double>());
        window.complete(action);
      }
    }
    if (request.contains("throughput_history_mbps"))
      throughputs = request.at("throughput_history_mbps").get<std::vector<double>>();
    for (double c : throughputs)
      if (!(c > 0.0) || !std::isfinite(c)) throw BadRequest("throughputs must be positive");
  } catch (const BadRequest& e) {
    return reply(400, {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    return reply(400, {{"error", std::string("malformed field: ") + e.what()}});
  } catch (const Error& e) {
    return reply(400, {{"error", e.what()}});
  }

  try {
    const EstimatorReturn returns(estimator_, history_window_);
    const double r_hat = returns.estimate_from(throughputs, newest_obs);
    window.append(newest_t, std::move(newest_obs), r_hat);
    int level = 0;
    {
      std::lock_guard lock(mutex_);
      level = model_.decide(window);
    }
    return reply(200, {{"level", level}, {"r_hat", r_hat}});
  } catch (const std::exception& e) {
    return reply(500, {{"error", std::string("model failure: ") + e.what()}});
  }
}

void serve_decisions(DecisionService& service, const std::string& host, int port) {
  httplib::Server server;
  server.Post("/decide", [&](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = service.handle(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  if (!server.listen(host, port))
    throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace karma
