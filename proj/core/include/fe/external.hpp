#pragma once

#include <chrono>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "fe/image.hpp"
#include "fe/inpaint.hpp"

namespace fe {

/// How to reach an out-of-process model (neural inpainter, LPIPS scorer).
///
/// JSON form: { "kind": "command"|"http", "command": ["prog", "{input}", ...],
/// "url": "http://host:port/path", "timeout_s": 120 }
///
/// Command placeholders: {input} {mask} {output} for inpainting, {gt} {pred}
/// for metrics. HTTP adapters receive the PNGs as multipart form fields of
/// the same names and answer with the PNG (inpainting) or a decimal number
/// (metrics) as the body.
struct AdapterConfig {
  enum class Kind { command, http };

  Kind kind = Kind::command;
  std::vector<std::string> command;
  std::string url;
  double timeout_s = 120.0;

  /// Throws ValidationError on a malformed config.
  static AdapterConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string describe() const;
};

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string out;
  std::string err;
};

/// fork/exec with captured stdout and stderr; the child is killed when the
/// timeout elapses.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

/// Temporary directory removed on destruction.
class ScratchDir {
 public:
  ScratchDir();
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// Writes input.png and mask.png to a fresh scratch directory, runs the
/// adapter and reads output.png back. Unmasked pixels of the result are
/// forced back to the input's. Throws BackendError naming the adapter.
RgbImage external_inpaint(const InpaintRequest& request, const AdapterConfig& adapter);

class ExternalBackend final : public InpaintBackend {
 public:
  explicit ExternalBackend(AdapterConfig adapter) : adapter_(std::move(adapter)) {}
  std::string name() const override { return "external(" + adapter_.describe() + ")"; }
  RgbImage fill(const InpaintRequest& request) const override { return external_inpaint(request, adapter_); }

 private:
  AdapterConfig adapter_;
};

/// Parses a single decimal number (surrounding whitespace allowed); throws
/// Error quoting the payload otherwise.
double parse_metric_value(std::string_view payload);

/// Perceptual distance from an external LPIPS scorer.
double lpips_external(const RgbImage& gt, const RgbImage& pred, const AdapterConfig& adapter);

}  // namespace fe
