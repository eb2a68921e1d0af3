#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fe/pipeline.hpp"
#include "fe/scene.hpp"

namespace httplib {
class Server;
}

namespace fe::app {

/// Error carrying the HTTP status the API answers with.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object())
      : std::runtime_error(message), status_(status), extra_(std::move(extra)) {}
  int status() const noexcept { return status_; }
  const nlohmann::json& extra() const noexcept { return extra_; }

 private:
  int status_;
  nlohmann::json extra_;
};

/// Single-scene editing state. The displayed image is always recomputed
/// from the original bundle for the current erased set, and results are
/// cached per set. Mutations are serialized: a mutation arriving while
/// another is computing fails with 409.
class Session {
 public:
  Session(SceneBundle bundle, PipelineConfig config, std::shared_ptr<const InpaintBackend> backend = nullptr);

  const SceneBundle& bundle() const noexcept { return bundle_; }
  nlohmann::json scene_json() const;
  std::string original_png() const;
  std::string current_png() const;
  std::vector<std::string> erased() const;
  std::size_t history_depth() const;

  nlohmann::json erase(const std::vector<std::string>& ids);
  nlohmann::json restore(const std::vector<std::string>& ids);
  nlohmann::json undo();

 private:
  struct Result {
    std::string png;
    nlohmann::json timings;
  };

  class Guard;

  void check_ids(const std::vector<std::string>& ids) const;
  static std::string cache_key(std::vector<std::string> ids);
  nlohmann::json transition(std::vector<std::string> next, bool push);
  nlohmann::json state_json(const Result& r, bool cached) const;

  const SceneBundle bundle_;
  const PipelineConfig config_;
  std::shared_ptr<const InpaintBackend> backend_;
  std::string original_png_;
  nlohmann::json scene_json_;

  mutable std::mutex mutex_;
  std::atomic<bool> busy_{false};
  std::vector<std::string> erased_;
  std::vector<std::vector<std::string>> history_;
  std::map<std::string, Result> cache_;
};

/// Parses {"ids": ["a", ...]}; throws ApiError(400) otherwise.
std::vector<std::string> parse_ids(const std::string& body);

/// HTTP front end of a Session.
class Service {
 public:
  explicit Service(Session& session);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void run();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  Session& session_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace fe::app
