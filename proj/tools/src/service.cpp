#include "fe/app/service.hpp"

#include <algorithm>
#include <httplib.h>

#include "fe/app/outline.hpp"
#include "fe/errors.hpp"
#include "fe/png_io.hpp"

namespace fe::app {

using nlohmann::json;

class Session::Guard {
 public:
  explicit Guard(std::atomic<bool>& busy) : busy_(busy) {
    bool expected = false;
    if (!busy_.compare_exchange_strong(expected, true))
      throw ApiError(409, "a computation for this session is already in flight");
  }
  ~Guard() { busy_.store(false); }
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;

 private:
  std::atomic<bool>& busy_;
};

Session::Session(SceneBundle bundle, PipelineConfig config, std::shared_ptr<const InpaintBackend> backend)
    : bundle_(std::move(bundle)), config_(std::move(config)), backend_(std::move(backend)) {
  if (!backend_) backend_ = make_backend(config_.backend, config_.seed);
  original_png_ = encode_png(bundle_.image);
  json instances = json::array();
  for (const InstanceMask& inst : bundle_.instances) {
    const BoundingBox box = bounding_box(inst.mask);
    json poly = json::array();
    for (const Point& p : outline(inst.mask)) poly.push_back({p.x, p.y});
    instances.push_back({{"id", inst.id},
                         {"label", inst.label},
                         {"bbox", {{"x", box.x}, {"y", box.y}, {"width", box.width}, {"height", box.height}}},
                         {"outline", poly}});
  }
  json planes = json::array();
  for (const Plane& p : bundle_.planes) planes.push_back({{"id", p.id}, {"kind", to_string(p.kind)}});
  scene_json_ = {{"instances", instances},
                 {"planes", planes},
                 {"width", bundle_.image.width()},
                 {"height", bundle_.image.height()},
                 {"image_url", "/api/image/original"}};
  history_.push_back({});
  cache_[cache_key({})] = {original_png_, StageTimings{}.to_json()};
}

json Session::scene_json() const {
  json j = scene_json_;
  j["erased"] = erased();
  j["current_image_url"] = "/api/image/current";
  return j;
}

std::string Session::original_png() const { return original_png_; }

std::string Session::current_png() const {
  std::lock_guard lock(mutex_);
  return cache_.at(cache_key(erased_)).png;
}

std::vector<std::string> Session::erased() const {
  std::lock_guard lock(mutex_);
  return erased_;
}

std::size_t Session::history_depth() const {
  std::lock_guard lock(mutex_);
  return history_.size();
}

void Session::check_ids(const std::vector<std::string>& ids) const {
  std::vector<std::string> unknown;
  for (const std::string& id : ids)
    if (!bundle_.find_instance(id)) unknown.push_back(id);
  if (unknown.empty()) return;
  std::vector<std::string> valid;
  for (const InstanceMask& inst : bundle_.instances) valid.push_back(inst.id);
  std::string msg = "unknown instance id";
  for (const std::string& u : unknown) msg += " '" + u + "'";
  throw ApiError(404, msg, {{"unknown_ids", unknown}, {"valid_ids", valid}});
}

std::string Session::cache_key(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::string k;
  for (const std::string& id : ids) k += id + '\n';
  return k;
}

json Session::state_json(const Result& r, bool cached) const {
  json timings = r.timings;
  timings["cached"] = cached;
  return {{"image_url", "/api/image/current"}, {"erased", erased_}, {"timings", timings}};
}

json Session::transition(std::vector<std::string> next, bool push) {
  const std::string key = cache_key(next);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      erased_ = std::move(next);
      if (push) history_.push_back(erased_);
      return state_json(it->second, true);
    }
  }
  const PipelineResult res = fe::erase(bundle_, Selection::only(next), config_, *backend_);
  Result r{encode_png(res.final_image), res.timings.to_json()};
  r.timings["warnings"] = res.warnings;
  std::lock_guard lock(mutex_);
  erased_ = std::move(next);
  if (push) history_.push_back(erased_);
  const Result& stored = cache_[key] = std::move(r);
  return state_json(stored, false);
}

json Session::erase(const std::vector<std::string>& ids) {
  check_ids(ids);
  Guard guard(busy_);
  std::vector<std::string> next = erased();
  for (const std::string& id : ids)
    if (std::find(next.begin(), next.end(), id) == next.end()) next.push_back(id);
  return transition(std::move(next), true);
}

json Session::restore(const std::vector<std::string>& ids) {
  check_ids(ids);
  Guard guard(busy_);
  std::vector<std::string> next = erased();
  std::erase_if(next, [&](const std::string& id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); });
  return transition(std::move(next), true);
}

json Session::undo() {
  Guard guard(busy_);
  std::vector<std::string> prev;
  {
    std::lock_guard lock(mutex_);
    if (history_.size() <= 1) throw ApiError(400, "nothing to undo");
    history_.pop_back();
    prev = history_.back();
  }
  return transition(std::move(prev), false);
}

std::vector<std::string> parse_ids(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ApiError(400, std::string("malformed JSON body: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("ids") || !doc.at("ids").is_array())
    throw ApiError(400, "body must be an object with an 'ids' array");
  std::vector<std::string> ids;
  for (const json& v : doc.at("ids")) {
    if (!v.is_string()) throw ApiError(400, "'ids' must contain strings only");
    ids.push_back(v.get<std::string>());
  }
  return ids;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    send_json(res, 200, f());
  } catch (const ApiError& e) {
    json body = e.extra();
    body["error"] = e.what();
    send_json(res, e.status(), body);
  } catch (const ValidationError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

Service::Service(Session& session) : session_(session), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Get("/api/scene", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return session_.scene_json(); });
  });
  srv.Get("/api/image/original", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(session_.original_png(), "image/png");
  });
  srv.Get("/api/image/current", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(session_.current_png(), "image/png");
  });
  srv.Post("/api/erase", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return session_.erase(parse_ids(req.body)); });
  });
  srv.Post("/api/restore", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return session_.restore(parse_ids(req.body)); });
  });
  srv.Post("/api/undo", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return session_.undo(); });
  });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Service::run() { server_->listen_after_bind(); }

void Service::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void Service::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fe::app
