#include "fe/app/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "fe/app/service.hpp"
#include "fe/errors.hpp"
#include "fe/evaluate.hpp"
#include "fe/external.hpp"
#include "fe/geometry.hpp"
#include "fe/metrics.hpp"
#include "fe/pipeline.hpp"
#include "fe/png_io.hpp"
#include "fe/scene.hpp"

namespace fe::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  std::string s = buf;
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

SceneBundle load_scene_reporting(const fs::path& dir) {
  std::vector<std::string> warnings;
  SceneBundle b = load_scene(dir, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return b;
}

struct EraseArgs {
  std::string scene, config, out, dump, timings;
  std::vector<std::string> select;
  bool all = false;
};

int run_erase(const EraseArgs& a) {
  if (a.all == !a.select.empty()) throw ValidationError("erase: pass exactly one of --select or --all");
  const SceneBundle bundle = load_scene_reporting(a.scene);
  const PipelineConfig config = a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config);
  const Selection sel = a.all ? Selection::everything() : Selection::only(a.select);
  std::optional<fs::path> dump;
  if (!a.dump.empty()) dump = fs::path(a.dump);
  const PipelineResult r = erase(bundle, sel, config, dump);
  write_png(a.out, r.final_image);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  json t = r.timings.to_json();
  t["planes"] = json::array();
  for (const auto& p : r.per_plane) {
    json pj = p.timings.to_json();
    pj["plane_id"] = p.plane_id;
    if (p.skipped) pj["skipped"] = p.skip_reason;
    t["planes"].push_back(pj);
  }
  t["final_pass_ran"] = r.final_pass_ran;
  t["backend_calls"] = r.backend_calls;
  std::cerr << "timings " << t.dump() << "\n";
  if (!a.timings.empty()) {
    std::ofstream out(a.timings);
    if (!out) throw Error("cannot write " + a.timings);
    out << t.dump(2) << "\n";
  }
  return 0;
}

struct EvaluateArgs {
  std::string dataset, methods, report, psnr_region = "image", lpips_adapter;
  double blur_sigma = 2.0;
};

int run_evaluate(const EvaluateArgs& a) {
  EvalOptions opt;
  opt.incoherence.blur_sigma = a.blur_sigma;
  opt.psnr_masked_region = a.psnr_region == "mask";
  if (!a.lpips_adapter.empty()) opt.lpips = AdapterConfig::from_json(read_json_file(a.lpips_adapter));
  const EvalReport report = evaluate(a.dataset, MethodSpec::load_list(a.methods), opt);
  report.write(a.report);
  std::cout << report.table();
  for (const auto& f : report.failures) std::cerr << "failed " << f.scene_id << " [" << f.method << "]: " << f.message << "\n";
  return 0;
}

struct RectifyArgs {
  std::string scene, plane, out, mask_out;
  int target = 512;
};

int run_rectify(const RectifyArgs& a) {
  const SceneBundle bundle = load_scene_reporting(a.scene);
  const Plane* plane = bundle.find_plane(a.plane);
  if (!plane) {
    std::string ids;
    for (const auto& p : bundle.planes) ids += (ids.empty() ? "" : ", ") + p.id;
    throw ValidationError("unknown plane '" + a.plane + "' (planes: " + ids + ")");
  }
  const RectifiedFrame frame = compute_rectification(*plane, bundle.intrinsics, a.target);
  const WarpedImage w = warp_image(bundle.image, frame.orig_to_rect, frame.rect_size());
  write_png(a.out, w.image);
  if (!a.mask_out.empty()) write_png(a.mask_out, mask_intersection(w.valid, warp_mask(plane->support_mask, frame.orig_to_rect, frame.rect_size())));
  json h = json::array();
  for (int i = 0; i < 3; ++i) h.push_back({frame.orig_to_rect(i, 0), frame.orig_to_rect(i, 1), frame.orig_to_rect(i, 2)});
  std::cout << json{{"plane_id", frame.plane_id},
                    {"h_orig_to_rect", h},
                    {"rect_width", frame.rect_width},
                    {"rect_height", frame.rect_height},
                    {"pixels_per_meter", frame.pixels_per_meter},
                    {"virtual_focal", frame.virtual_focal}}
                   .dump(2)
            << "\n";
  return 0;
}

struct MetricsArgs {
  std::string gt, pred, mask, region = "image", edge_detector = "sobel", gt_edges, pred_edges, lpips_adapter;
  double blur_sigma = 2.0;
};

int run_metrics(const MetricsArgs& a) {
  const RgbImage gt = read_rgb_png(a.gt);
  const RgbImage pred = read_rgb_png(a.pred);
  const BinaryMask mask = read_mask_png(a.mask);
  require_same_size(gt.size(), pred.size(), "gt vs pred");
  require_same_size(gt.size(), mask.size(), "gt vs mask");
  IncoherenceParams params;
  params.blur_sigma = a.blur_sigma;
  params.edge_detector = *parse_edge_detector(a.edge_detector);
  double inc = 0.0;
  if (params.edge_detector == EdgeDetector::external_file) {
    if (a.gt_edges.empty() || a.pred_edges.empty())
      throw ValidationError("--edge-detector external needs --gt-edges and --pred-edges");
    inc = incoherence(load_edge_map(a.gt_edges, gt.size()), load_edge_map(a.pred_edges, gt.size()), mask, params);
  } else {
    inc = incoherence(gt, pred, mask, params);
  }
  const double p = psnr(gt, pred, a.region == "mask" ? &mask : nullptr);
  std::cout << "incoherence " << format_metric(inc) << "\n";
  std::cout << "psnr " << format_metric(p) << "\n";
  if (!a.lpips_adapter.empty())
    std::cout << "lpips " << format_metric(lpips_external(gt, pred, AdapterConfig::from_json(read_json_file(a.lpips_adapter)))) << "\n";
  return 0;
}

struct ServeArgs {
  std::string scene, config, host = "127.0.0.1";
  int port = 8080;
};

int run_serve(const ServeArgs& a) {
  int port = a.port;
  if (const char* env = std::getenv("FE_PORT"); env && *env) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      throw ValidationError(std::string("FE_PORT is not a port number: ") + env);
    }
  }
  if (port < 0 || port > 65535) throw ValidationError("port out of range: " + std::to_string(port));
  Session session(load_scene_reporting(a.scene), a.config.empty() ? PipelineConfig{} : PipelineConfig::load(a.config));
  Service service(session);
  const int bound = service.bind(a.host, port);
  std::cerr << "serving " << a.scene << " on http://" << a.host << ":" << bound << "\n";
  service.run();
  return 0;
}

struct InpaintArgs {
  std::string input, mask, output, backend = "patchmatch";
  std::uint64_t seed = 0;
};

int run_inpaint(const InpaintArgs& a) {
  json desc;
  if (a.backend == "patchmatch" || a.backend == "diffusion")
    desc = {{"kind", a.backend}};
  else
    desc = read_json_file(a.backend);
  auto backend = make_backend(desc, a.seed);
  InpaintRequest req{read_rgb_png(a.input), read_mask_png(a.mask)};
  write_png(a.output, inpaint(req, *backend));
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Plane-wise furniture eraser"};
  app.name("fe");
  app.require_subcommand(1);

  EraseArgs ea;
  auto* erase_cmd = app.add_subcommand("erase", "Remove selected objects from a scene");
  erase_cmd->add_option("--scene", ea.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  erase_cmd->add_option("--select", ea.select, "Instance ids to erase")->delimiter(',');
  erase_cmd->add_flag("--all", ea.all, "Erase every instance");
  erase_cmd->add_option("--config", ea.config, "Pipeline config JSON");
  erase_cmd->add_option("--out", ea.out, "Output PNG")->required();
  erase_cmd->add_option("--dump", ea.dump, "Directory for intermediate images");
  erase_cmd->add_option("--timings", ea.timings, "Write stage timings JSON here");

  EvaluateArgs va;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score methods on a dataset");
  eval_cmd->add_option("--dataset", va.dataset, "Dataset directory")->required();
  eval_cmd->add_option("--methods", va.methods, "Method list JSON")->required();
  eval_cmd->add_option("--report", va.report, "Output directory for report.csv and report.json")->required();
  eval_cmd->add_option("--psnr-region", va.psnr_region, "image or mask")->check(CLI::IsMember({"image", "mask"}));
  eval_cmd->add_option("--blur-sigma", va.blur_sigma, "Ground-truth edge blur sigma");
  eval_cmd->add_option("--lpips-adapter", va.lpips_adapter, "LPIPS adapter config JSON");

  RectifyArgs ra;
  auto* rect_cmd = app.add_subcommand("rectify", "Warp one plane fronto-parallel");
  rect_cmd->add_option("--scene", ra.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  rect_cmd->add_option("--plane", ra.plane, "Plane id")->required();
  rect_cmd->add_option("--out", ra.out, "Output PNG")->required();
  rect_cmd->add_option("--mask-out", ra.mask_out, "Also write the rectified support mask");
  rect_cmd->add_option("--target-long-side", ra.target, "Rectified long side in pixels")->check(CLI::Range(32, 1 << 14));

  MetricsArgs ma;
  auto* met_cmd = app.add_subcommand("metrics", "Incoherence and PSNR of a prediction");
  met_cmd->add_option("--gt", ma.gt, "Ground-truth PNG")->required();
  met_cmd->add_option("--pred", ma.pred, "Predicted PNG")->required();
  met_cmd->add_option("--mask", ma.mask, "Inpainted-region mask PNG")->required();
  met_cmd->add_option("--region", ma.region, "PSNR over the image or the mask")->check(CLI::IsMember({"image", "mask"}));
  met_cmd->add_option("--blur-sigma", ma.blur_sigma, "Ground-truth edge blur sigma");
  met_cmd->add_option("--edge-detector", ma.edge_detector, "sobel or external")
      ->check(CLI::IsMember({"sobel", "external"}));
  met_cmd->add_option("--gt-edges", ma.gt_edges, "External ground-truth edge map PNG");
  met_cmd->add_option("--pred-edges", ma.pred_edges, "External predicted edge map PNG");
  met_cmd->add_option("--lpips-adapter", ma.lpips_adapter, "LPIPS adapter config JSON");

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API for interactive erasing");
  serve_cmd->add_option("--scene", sa.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", sa.port, "Port (FE_PORT overrides)");
  serve_cmd->add_option("--host", sa.host, "Bind address");
  serve_cmd->add_option("--config", sa.config, "Pipeline config JSON");

  InpaintArgs ia;
  auto* inp_cmd = app.add_subcommand("inpaint", "Fill a masked image with one backend");
  inp_cmd->add_option("--input", ia.input, "Input PNG")->required();
  inp_cmd->add_option("--mask", ia.mask, "Mask PNG")->required();
  inp_cmd->add_option("--output", ia.output, "Output PNG")->required();
  inp_cmd->add_option("--backend", ia.backend, "patchmatch, diffusion or a backend JSON file");
  inp_cmd->add_option("--seed", ia.seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 1;
  }

  try {
    if (*erase_cmd) return run_erase(ea);
    if (*eval_cmd) return run_evaluate(va);
    if (*rect_cmd) return run_rectify(ra);
    if (*met_cmd) return run_metrics(ma);
    if (*serve_cmd) return run_serve(sa);
    if (*inp_cmd) return run_inpaint(ia);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int cli_main(int argc, char** argv) { return cli_main(std::vector<std::string>(argv, argv + argc)); }

}  // namespace fe::app
