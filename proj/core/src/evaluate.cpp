#include "fe/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "fe/errors.hpp"
#include "fe/png_io.hpp"
#include "fe/scene.hpp"

namespace fe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

__extension__ using u128 = unsigned __int128;

// Engine-independent draws so mask sets match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  int integer(int lo, int hi) {
    const u128 span = static_cast<u128>(hi - lo + 1);
    return lo + static_cast<int>((static_cast<u128>(engine_()) * span) >> 64);
  }

 private:
  std::mt19937_64 engine_;
};

struct Ellipse {
  double ox, oy, a, b, angle;
};

BinaryMask rasterize_blob(Size frame, double cx, double cy, double scale, const std::vector<Ellipse>& parts) {
  BinaryMask m(frame);
  for (const Ellipse& e : parts) {
    const double ex = cx + scale * e.ox;
    const double ey = cy + scale * e.oy;
    const double a = scale * e.a;
    const double b = scale * e.b;
    if (a <= 0.0 || b <= 0.0) continue;
    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    const double reach = std::max(a, b);
    const int x0 = std::max(0, static_cast<int>(std::floor(ex - reach)));
    const int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(ex + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(ey - reach)));
    const int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(ey + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - ex;
        const double dy = y + 0.5 - ey;
        const double u = (c * dx + s * dy) / a;
        const double v = (-s * dx + c * dy) / b;
        if (u * u + v * v <= 1.0) m.set(x, y);
      }
    }
  }
  return m;
}

BinaryMask crop_to_content(const BinaryMask& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.test(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw ValidationError("silhouette has no set pixels");
  BinaryMask out(Size{x1 - x0 + 1, y1 - y0 + 1});
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (m.test(x, y)) out.set(x - x0, y - y0);
  return out;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ValidationError("report.csv: bad number '" + s + "'");
  return v;
}

const char* mode_name(MethodSpec::Mode m) {
  switch (m) {
    case MethodSpec::Mode::identity: return "identity";
    case MethodSpec::Mode::whole: return "whole";
    case MethodSpec::Mode::planes: return "planes";
  }
  return "whole";
}

struct Scene {
  std::string name;
  RgbImage gt;
  std::vector<std::pair<std::string, BinaryMask>> masks;
  bool has_layout = false;
};

RgbImage blank(const RgbImage& image, const BinaryMask& mask) {
  RgbImage out = image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (mask.test(x, y)) out.set(x, y, Rgb{0, 0, 0});
  return out;
}

RgbImage run_method(const MethodSpec& method, const Scene& scene, const fs::path& scene_dir,
                    const BinaryMask& test_mask) {
  switch (method.mode) {
    case MethodSpec::Mode::identity: return scene.gt;
    case MethodSpec::Mode::whole: {
      const BinaryMask hole = dilate_disk(test_mask, method.config.mask_dilation_px);
      auto backend = make_backend(method.config.backend, method.config.seed);
      return inpaint({blank(scene.gt, test_mask), hole}, *backend);
    }
    case MethodSpec::Mode::planes: {
      if (!scene.has_layout) throw ValidationError("scene has no scene.json; per-plane methods need a layout");
      SceneBundle bundle = load_scene(scene_dir);
      require_same_size(bundle.image.size(), scene.gt.size(), "scene.json image vs ground truth");
      bundle.instances = {InstanceMask{"test-mask", "test", test_mask}};
      bundle.image = blank(scene.gt, test_mask);
      return erase(bundle, Selection::everything(), method.config).final_image;
    }
  }
  throw ValidationError("unknown method mode");
}

}  // namespace

std::vector<BinaryMask> synthesize_test_masks(Size frame, const BlobMaskParams& params, std::uint64_t seed) {
  if (frame.area() == 0) throw ValidationError("synthesize_test_masks: empty frame");
  if (params.count < 0) throw ValidationError("synthesize_test_masks: negative count");
  if (!(params.coverage_min > 0.0 && params.coverage_min <= params.coverage_max && params.coverage_max < 0.9))
    throw ValidationError("synthesize_test_masks: coverage range must satisfy 0 < min <= max < 0.9");
  Rng rng(seed);
  const double area = static_cast<double>(frame.area());
  const double diag = std::hypot(frame.width, frame.height);
  std::vector<BinaryMask> out;
  constexpr int kAttempts = 64;
  for (int i = 0; i < params.count; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < kAttempts && !done; ++attempt) {
      const int k = rng.integer(3, 8);
      const double target = rng.uniform(params.coverage_min, params.coverage_max);
      const double cx = rng.uniform(0.3, 0.7) * frame.width;
      const double cy = rng.uniform(0.3, 0.7) * frame.height;
      std::vector<Ellipse> parts(k);
      for (Ellipse& e : parts) {
        e.ox = rng.uniform(-0.5, 0.5);
        e.oy = rng.uniform(-0.5, 0.5);
        e.a = rng.uniform(0.35, 0.8);
        e.b = rng.uniform(0.35, 0.8);
        e.angle = rng.uniform(0.0, std::numbers::pi);
      }
      double lo = 0.0;
      double hi = 2.0 * diag;
      BinaryMask best;
      double best_err = std::numeric_limits<double>::infinity();
      for (int step = 0; step < 32; ++step) {
        const double mid = 0.5 * (lo + hi);
        BinaryMask m = rasterize_blob(frame, cx, cy, mid, parts);
        const double cov = static_cast<double>(m.count()) / area;
        if (std::abs(cov - target) < best_err) {
          best_err = std::abs(cov - target);
          best = std::move(m);
        }
        (cov < target ? lo : hi) = mid;
      }
      const double cov = static_cast<double>(best.count()) / area;
      if (cov >= params.coverage_min && cov <= params.coverage_max) {
        out.push_back(std::move(best));
        done = true;
      }
    }
    if (!done)
      throw ValidationError("synthesize_test_masks: coverage range [" + format_number(params.coverage_min) + ", " +
                            format_number(params.coverage_max) + "] is unattainable at " +
                            std::to_string(frame.width) + "x" + std::to_string(frame.height));
  }
  return out;
}

std::vector<BinaryMask> synthesize_test_masks(Size frame, const SilhouetteMaskParams& params, std::uint64_t seed) {
  if (frame.area() == 0) throw ValidationError("synthesize_test_masks: empty frame");
  if (params.silhouettes.empty()) throw ValidationError("synthesize_test_masks: no silhouettes");
  if (!(params.scale_min > 0.0 && params.scale_min <= params.scale_max))
    throw ValidationError("synthesize_test_masks: scale range must satisfy 0 < min <= max");
  std::vector<BinaryMask> shapes;
  for (const BinaryMask& s : params.silhouettes) {
    BinaryMask c = crop_to_content(s);
    const int w = static_cast<int>(std::lround(c.width() * params.scale_min));
    const int h = static_cast<int>(std::lround(c.height() * params.scale_min));
    if (w > frame.width || h > frame.height)
      throw ValidationError("synthesize_test_masks: silhouette of " + std::to_string(c.width()) + "x" +
                            std::to_string(c.height()) + " exceeds the " + std::to_string(frame.width) + "x" +
                            std::to_string(frame.height) + " frame at the minimum scale");
    shapes.push_back(std::move(c));
  }
  Rng rng(seed);
  const int count = params.count > 0 ? params.count : static_cast<int>(shapes.size());
  std::vector<BinaryMask> out;
  for (int i = 0; i < count; ++i) {
    const BinaryMask& shape = shapes[static_cast<std::size_t>(i) % shapes.size()];
    const double fit = std::min(static_cast<double>(frame.width) / shape.width(),
                                static_cast<double>(frame.height) / shape.height());
    const double hi = std::max(params.scale_min, std::min(params.scale_max, fit));
    const double scale = params.scale_min == hi ? hi : rng.uniform(params.scale_min, hi);
    const int w = std::clamp(static_cast<int>(std::lround(shape.width() * scale)), 1, frame.width);
    const int h = std::clamp(static_cast<int>(std::lround(shape.height() * scale)), 1, frame.height);
    const int ox = rng.integer(0, frame.width - w);
    const int oy = rng.integer(0, frame.height - h);
    BinaryMask m(frame);
    for (int y = 0; y < h; ++y) {
      const int sy = std::min(shape.height() - 1, static_cast<int>((y + 0.5) * shape.height() / h));
      for (int x = 0; x < w; ++x) {
        const int sx = std::min(shape.width() - 1, static_cast<int>((x + 0.5) * shape.width() / w));
        if (shape.test(sx, sy)) m.set(ox + x, oy + y);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

MethodSpec MethodSpec::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("method must be a JSON object");
  MethodSpec m;
  if (!j.contains("label") || !j.at("label").is_string() || j.at("label").get<std::string>().empty())
    throw ValidationError("method: 'label' must be a non-empty string");
  m.label = j.at("label").get<std::string>();
  const std::string mode = j.value("mode", std::string("whole"));
  if (mode == "identity")
    m.mode = Mode::identity;
  else if (mode == "whole")
    m.mode = Mode::whole;
  else if (mode == "planes")
    m.mode = Mode::planes;
  else
    throw ValidationError("method '" + m.label + "': unknown mode '" + mode + "'");
  m.config = PipelineConfig::from_json(j);
  return m;
}

std::vector<MethodSpec> MethodSpec::load_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing methods file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
  const json& list = doc.is_object() && doc.contains("methods") ? doc.at("methods") : doc;
  if (!list.is_array() || list.empty()) throw ValidationError(path.string() + ": expected a non-empty method list");
  std::vector<MethodSpec> out;
  for (const json& j : list) out.push_back(from_json(j));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (out[i].label == out[k].label) throw ValidationError(path.string() + ": duplicate label '" + out[i].label + "'");
  return out;
}

json MethodSpec::to_json() const {
  json j = config.to_json();
  j["label"] = label;
  j["mode"] = mode_name(mode);
  return j;
}

void EvalReport::aggregate(const std::vector<std::string>& methods) {
  means.clear();
  for (const std::string& name : methods) {
    MethodMeans m;
    m.method = name;
    double lp = 0.0, inc = 0.0, ps = 0.0;
    std::size_t n_lp = 0;
    for (const EvalRecord& r : records) {
      if (r.method != name) continue;
      ++m.records;
      inc += r.incoherence;
      ps += r.psnr;
      if (r.lpips) {
        lp += *r.lpips;
        ++n_lp;
      }
    }
    for (const EvalFailure& f : failures)
      if (f.method == name) ++m.failures;
    if (m.records > 0) {
      m.incoherence = inc / static_cast<double>(m.records);
      m.psnr = ps / static_cast<double>(m.records);
    } else {
      m.incoherence = m.psnr = std::numeric_limits<double>::quiet_NaN();
    }
    if (n_lp > 0 && n_lp == m.records) m.lpips = lp / static_cast<double>(n_lp);
    means.push_back(m);
  }
}

std::string EvalReport::csv() const {
  std::string out = "scene_id,method,lpips,incoherence,psnr,coverage\n";
  for (const EvalRecord& r : records) {
    out += r.scene_id + "," + r.method + "," + (r.lpips ? format_number(*r.lpips) : "") + "," +
           format_number(r.incoherence) + "," + format_number(r.psnr) + "," + format_number(r.coverage) + "\n";
  }
  return out;
}

json EvalReport::to_json() const {
  json recs = json::array();
  for (const EvalRecord& r : records) {
    recs.push_back({{"scene_id", r.scene_id},
                    {"method", r.method},
                    {"lpips", r.lpips ? json(*r.lpips) : json(nullptr)},
                    {"incoherence", r.incoherence},
                    {"psnr", number_json(r.psnr)},
                    {"coverage", r.coverage}});
  }
  json mean_rows = json::array();
  for (const MethodMeans& m : means) {
    mean_rows.push_back({{"method", m.method},
                         {"records", m.records},
                         {"failures", m.failures},
                         {"lpips", m.lpips ? json(*m.lpips) : json(nullptr)},
                         {"incoherence", std::isnan(m.incoherence) ? json(nullptr) : json(m.incoherence)},
                         {"psnr", std::isnan(m.psnr) ? json(nullptr) : number_json(m.psnr)}});
  }
  json fails = json::array();
  for (const EvalFailure& f : failures)
    fails.push_back({{"scene_id", f.scene_id}, {"method", f.method}, {"message", f.message}});
  return {{"dataset", dataset}, {"config", config}, {"means", mean_rows}, {"records", recs}, {"failures", fails}};
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %10s %12s %10s %8s %8s\n", "method", "LPIPS", "incoherence", "PSNR",
                "records", "failed");
  os << line;
  for (const MethodMeans& m : means) {
    const std::string lp = m.lpips ? format_number(std::round(*m.lpips * 1e4) / 1e4) : "—";
    std::snprintf(line, sizeof line, "%-24s %10s %12.4f %10.3f %8zu %8zu\n", m.method.c_str(), lp.c_str(),
                  m.incoherence, m.psnr, m.records, m.failures);
    os << line;
  }
  return os.str();
}

void EvalReport::write(const fs::path& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "report.csv", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "report.csv").string());
    out << csv();
  }
  std::ofstream out(dir / "report.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "report.json").string());
  out << to_json().dump(2) << "\n";
}

std::vector<EvalRecord> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "scene_id,method,lpips,incoherence,psnr,coverage")
    throw ValidationError("report.csv: unexpected header");
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 6) throw ValidationError("report.csv: expected 6 cells in '" + line + "'");
    EvalRecord r;
    r.scene_id = cells[0];
    r.method = cells[1];
    if (!cells[2].empty()) r.lpips = parse_number(cells[2]);
    r.incoherence = parse_number(cells[3]);
    r.psnr = parse_number(cells[4]);
    r.coverage = parse_number(cells[5]);
    out.push_back(r);
  }
  return out;
}

EvalReport evaluate(const fs::path& dataset_dir, const std::vector<MethodSpec>& methods, const EvalOptions& options) {
  if (!fs::is_directory(dataset_dir)) throw ValidationError("dataset directory not found: " + dataset_dir.string());
  if (methods.empty()) throw ValidationError("evaluate: no methods");
  options.incoherence.validate();
  if (options.incoherence.edge_detector != EdgeDetector::sobel)
    throw ValidationError("evaluate: only the sobel edge detector is available for generated predictions");

  std::vector<fs::path> scene_dirs;
  for (const auto& entry : fs::directory_iterator(dataset_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "image.png")) scene_dirs.push_back(entry.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());
  if (scene_dirs.empty()) throw ValidationError("dataset has no scenes with image.png: " + dataset_dir.string());

  EvalReport report;
  std::size_t mask_total = 0;
  json scene_names = json::array();
  for (const fs::path& dir : scene_dirs) {
    Scene scene;
    scene.name = dir.filename().string();
    scene_names.push_back(scene.name);
    scene.has_layout = fs::exists(dir / "scene.json");
    std::vector<fs::path> mask_files;
    if (fs::is_directory(dir / "masks"))
      for (const auto& e : fs::directory_iterator(dir / "masks"))
        if (e.is_regular_file() && e.path().extension() == ".png") mask_files.push_back(e.path());
    std::sort(mask_files.begin(), mask_files.end());
    try {
      scene.gt = read_rgb_png(dir / "image.png");
      for (const fs::path& f : mask_files) {
        BinaryMask m = read_mask_png(f);
        require_same_size(m.size(), scene.gt.size(), ("mask " + f.string()).c_str());
        scene.masks.emplace_back(f.stem().string(), std::move(m));
      }
    } catch (const std::exception& e) {
      for (const MethodSpec& method : methods) report.failures.push_back({scene.name, method.label, e.what()});
      continue;
    }
    mask_total += scene.masks.size();

    for (const auto& [mask_name, mask] : scene.masks) {
      const std::string id = scene.name + "/" + mask_name;
      for (const MethodSpec& method : methods) {
        try {
          if (mask.none()) throw ValidationError("empty test mask");
          const RgbImage pred = run_method(method, scene, dir, mask);
          EvalRecord r;
          r.scene_id = id;
          r.method = method.label;
          r.coverage = static_cast<double>(mask.count()) / static_cast<double>(mask.size().area());
          r.incoherence = incoherence(scene.gt, pred, mask, options.incoherence);
          r.psnr = psnr(scene.gt, pred, options.psnr_masked_region ? &mask : nullptr);
          if (options.lpips) r.lpips = lpips_external(scene.gt, pred, *options.lpips);
          report.records.push_back(r);
        } catch (const std::exception& e) {
          report.failures.push_back({id, method.label, e.what()});
        }
      }
    }
  }

  std::vector<std::string> labels;
  json method_cfg = json::array();
  for (const MethodSpec& m : methods) {
    labels.push_back(m.label);
    method_cfg.push_back(m.to_json());
  }
  report.aggregate(labels);
  report.dataset = {{"path", dataset_dir.string()}, {"scenes", scene_names}, {"masks", mask_total}};
  report.config = {{"methods", method_cfg},
                   {"incoherence",
                    {{"gt_enhance_threshold", options.incoherence.gt_enhance_threshold},
                     {"residual_threshold", options.incoherence.residual_threshold},
                     {"blur_sigma", options.incoherence.blur_sigma},
                     {"edge_detector", "sobel"}}},
                   {"psnr_region", options.psnr_masked_region ? "mask" : "image"},
                   {"lpips", options.lpips ? options.lpips->to_json() : json(nullptr)}};
  return report;
}

}  // namespace fe
