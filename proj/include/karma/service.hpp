#pragma once

#include <map>
#include <mutex>
#include <string>

#include <json.hpp>

#include "karma/dt.hpp"
#include "karma/estimator.hpp"

namespace karma {

struct ServiceResponse {
  int status = 200;
  std::string body;
};

/// Answers POST /decide. Requests carry the client's whole window, so the
/// service keeps no per-client state.
///
/// Request:  {"window": [{"t", "observation", "r_hat", "action"}...],
///            "ladder": [kbps...], "manifest_ref": name,
///            "throughput_history_mbps": [...] (optional)}
/// The newest window entry has no action and no r_hat. Without an explicit
/// history, throughputs come from the window's observations.
/// Response: {"level", "r_hat"}; errors: {"error": reason}.
class DecisionService {
 public:
  DecisionService(DtModel model, EstimatorModel estimator, int history_window = 4);

  /// Registers a manifest that requests may name; "builtin" is preset.
  void add_manifest(const std::string& name, const VideoManifest& manifest);
  ServiceResponse handle(const std::string& body);

 private:
  std::mutex mutex_;  // the network caches activations during forward
  DtModel model_;
  EstimatorModel estimator_;
  int history_window_;
  std::map<std::string, VideoManifest> manifests_;
};

/// Blocks serving POST /decide until the process stops.
void serve_decisions(DecisionService& service, const std::string& host, int port);

}  // namespace karma
