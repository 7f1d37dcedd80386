#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "maskjudge/annotations.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"
#include "maskjudge/judge.hpp"
#include "maskjudge/occlusion.hpp"
#include "maskjudge/png_io.hpp"
#include "maskjudge/review_server.hpp"
#include "maskjudge/runner.hpp"
#include "maskjudge/saliency.hpp"

namespace fs = std::filesystem;
using namespace maskjudge;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation:
    case ErrorKind::NotFound:
    case ErrorKind::Range:
    case ErrorKind::Dimension:
    case ErrorKind::Decode:
    case ErrorKind::Label:
    case ErrorKind::Credential:
    case ErrorKind::EmptySet:
    case ErrorKind::Precondition:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, std::string(what) + " not found: " + path);
}

// Options shared by run, sweep, report and serve. Unset flags leave the
// config-file (or built-in) value alone.
struct CommonFlags {
  std::string config;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> threshold;
  std::string out_dir;
  std::string mock_vlm;
  std::optional<std::size_t> concurrency;
  std::string model_label;

  void add_mask(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Mask steepness (default 25)");
    cmd->add_option("--beta", beta, "Mask midpoint in [0,1] (default 0.4)");
  }
  void add_run(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
    add_mask(cmd);
    cmd->add_option("--threshold", threshold, "Lowest score counted as high (default 3)");
    cmd->add_option("--out-dir", out_dir, "Output directory");
    cmd->add_option("--mock-vlm", mock_vlm, "Judge endpoint that needs no API key");
    cmd->add_option("--concurrency", concurrency, "Samples in flight");
    cmd->add_option("--model-label", model_label, "Row label of the audited model in reports");
  }

  runner::RunConfig resolve() const {
    runner::RunConfig cfg;
    if (!config.empty()) runner::apply_config(KeyValueConfig::load(config), cfg);
    if (alpha) cfg.mask_params.alpha = *alpha;
    if (beta) cfg.mask_params.beta = *beta;
    if (threshold) cfg.threshold.min_high_score = *threshold;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!mock_vlm.empty()) {
      cfg.vlm.endpoint = mock_vlm;
      cfg.vlm.require_api_key = false;
    }
    if (concurrency) cfg.concurrency = *concurrency;
    if (!model_label.empty()) cfg.model_label = model_label;
    return cfg;
  }
};

bool store_has_results(const fs::path& dir) {
  const fs::path log = dir / "results.jsonl";
  return fs::exists(log) && fs::file_size(log) > 0;
}

void echo_params(const MaskParams& p, bool defaulted) {
  std::fprintf(stderr, "alpha=%s beta=%s%s\n", shortest(p.alpha).c_str(), shortest(p.beta).c_str(),
               defaulted ? " (defaults)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-saliency attention audits judged by a vision-language model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(runner::version()));

  // mask
  CommonFlags mask_flags;
  std::string mask_image, mask_map, mask_out;
  auto* mask = app.add_subcommand("mask", "Darken low-attention pixels of an image");
  mask->add_option("--image", mask_image, "Input PNG")->required();
  mask->add_option("--map", mask_map, "Attention map (.png or float grid)")->required();
  mask->add_option("--out", mask_out, "Output PNG")->required();
  mask->add_option("--config", mask_flags.config, "key=value config file")->check(CLI::ExistingFile);
  mask_flags.add_mask(mask);

  // saliency
  std::string sal_image, sal_label, sal_backend, sal_out;
  OcclusionConfig occ;
  auto* saliency = app.add_subcommand("saliency", "Occlusion saliency map from a prediction backend");
  saliency->add_option("--image", sal_image, "Input PNG")->required();
  saliency->add_option("--label", sal_label, "Target class label")->required();
  saliency->add_option("--backend", sal_backend, "Prediction backend URL")->required();
  saliency->add_option("--out", sal_out, "Output map (.png for 16-bit gray, else float grid)")->required();
  saliency->add_option("--masks", occ.num_masks, "Number of random masks")->capture_default_str();
  saliency->add_option("--cells", occ.grid_width, "Cells per side of the mask grid")->capture_default_str();
  saliency->add_option("--keep-prob", occ.keep_prob, "Probability a cell stays visible")->capture_default_str();
  saliency->add_option("--seed", occ.seed, "Random seed")->capture_default_str();
  saliency->add_option("--in-flight", occ.max_in_flight, "Concurrent backend queries")->capture_default_str();

  // judge
  std::string judge_image, judge_label, judge_variant = "masked", judge_config, judge_mock;
  bool judge_json = false;
  auto* judge_cmd = app.add_subcommand("judge", "Ask the judge model to assess one masked image");
  judge_cmd->add_option("--image", judge_image, "Masked PNG")->required();
  judge_cmd->add_option("--label", judge_label, "Predicted object label")->required();
  judge_cmd->add_option("--prompt", judge_variant, "masked, heatmap, or a template file")->capture_default_str();
  judge_cmd->add_option("--config", judge_config, "key=value config file")->check(CLI::ExistingFile);
  judge_cmd->add_option("--mock-vlm", judge_mock, "Judge endpoint that needs no API key");
  judge_cmd->add_flag("--json", judge_json, "Print the assessment as JSON");

  // run
  CommonFlags run_flags;
  std::string run_manifest;
  bool run_resume = false;
  auto* run = app.add_subcommand("run", "Judge every sample of a manifest and write reports");
  run->add_option("--manifest", run_manifest, "JSONL manifest")->required();
  run_flags.add_run(run);
  run->add_flag("--resume", run_resume, "Continue a previous run in the same output directory");

  // sweep
  CommonFlags sweep_flags;
  std::string sweep_manifest, sweep_grid, sweep_scores;
  bool sweep_resume = false;
  auto* sweep = app.add_subcommand("sweep", "Correlate judge scores with human scores over a mask grid");
  sweep->add_option("--manifest", sweep_manifest, "JSONL manifest")->required();
  sweep_flags.add_run(sweep);
  sweep->add_option("--grid", sweep_grid, "alpha:beta[,alpha:beta...] (default 25:0.4,15:0.6,25:0.7)");
  sweep->add_option("--human-scores", sweep_scores,
                    "CSV sample_id,human_score (default: annotations in the output directory)");
  sweep->add_flag("--resume", sweep_resume, "Reuse results of a previous sweep");

  // report
  CommonFlags report_flags;
  auto* report = app.add_subcommand("report", "Rebuild reports from a result store");
  report_flags.add_run(report);

  // serve
  CommonFlags serve_flags;
  std::string serve_manifest, serve_bind = "127.0.0.1:8080", serve_ui;
  auto* serve = app.add_subcommand("serve", "Serve the annotation API and review UI");
  serve->add_option("--manifest", serve_manifest, "JSONL manifest")->required();
  serve->add_option("--config", serve_flags.config, "key=value config file")->check(CLI::ExistingFile);
  serve->add_option("--out-dir", serve_flags.out_dir, "Output directory of a run");
  serve->add_option("--threshold", serve_flags.threshold, "Lowest score counted as high (default 3)");
  serve->add_option("--bind", serve_bind, "host:port")->capture_default_str();
  serve->add_option("--ui-dir", serve_ui, "Directory of built UI assets")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*mask) {
      runner::RunConfig cfg = mask_flags.resolve();
      cfg.mask_params.validate();
      require_file(mask_image, "image");
      require_file(mask_map, "map");
      echo_params(cfg.mask_params, mask_flags.config.empty() && !mask_flags.alpha && !mask_flags.beta);
      const RasterImage image = png::decode_raster(io::read_bytes(mask_image));
      const AttentionMap map = resize_map(load_attention_map_file(mask_map), image.width, image.height);
      const MaskedImage out = apply_mask(image, activate_mask(map, cfg.mask_params));
      io::write_atomic(mask_out, png::encode(out.image));
      std::cout << mask_out << '\n';
    } else if (*saliency) {
      occ.grid_height = occ.grid_width;
      occ.validate();
      require_file(sal_image, "image");
      const RasterImage image = png::decode_raster(io::read_bytes(sal_image));
      HttpPredictionBackend backend(sal_backend);
      const AttentionMap map = generate_occlusion_map(image, sal_label, backend, occ);
      if (fs::path(sal_out).extension() == ".png") {
        io::write_atomic(sal_out, encode_map_png(map));
      } else {
        io::write_atomic(sal_out, format_float_grid(map));
      }
      std::cerr << backend.queries() << " backend queries, " << backend.retries() << " retries\n";
      std::cout << sal_out << '\n';
    } else if (*judge_cmd) {
      runner::RunConfig cfg;
      if (!judge_config.empty()) runner::apply_config(KeyValueConfig::load(judge_config), cfg);
      if (!judge_mock.empty()) {
        cfg.vlm.endpoint = judge_mock;
        cfg.vlm.require_api_key = false;
      }
      cfg.prompt_variant = judge_variant;
      cfg.vlm.validate();
      require_file(judge_image, "image");
      judge::VlmJudge judge(cfg.vlm);
      const auto bytes = io::read_bytes(judge_image);
      const judge::VlmAssessment a =
          judge.request_assessment_png(judge::build_prompt(cfg.prompt_template(), judge_label), bytes);
      if (judge_json) {
        std::cout << nlohmann::json{{"evaluation", a.evaluation},
                                    {"justification", a.justification},
                                    {"score", a.score},
                                    {"model_name", a.model_name}}
                         .dump(2)
                  << '\n';
      } else {
        std::cout << judge::format_assessment(a) << '\n';
      }
    } else if (*run) {
      runner::RunConfig cfg = run_flags.resolve();
      cfg.validate();
      const auto manifest = runner::load_manifest(run_manifest);
      if (!run_resume && store_has_results(cfg.out_dir)) {
        throw Error(ErrorKind::Precondition,
                    cfg.out_dir.string() + " already holds results; pass --resume to continue that run");
      }
      echo_params(cfg.mask_params, false);
      const runner::RunSummary s = runner::run_pipeline(manifest, cfg);
      std::cout << s.new_samples << " new samples, " << s.skipped << " already done, " << s.failed
                << " failed, " << s.network_requests << " judge requests, " << s.cache_hits << " cache hits\n";
      if (s.matrix) {
        std::cout << io::read_text(cfg.out_dir / "summary.txt");
      }
    } else if (*sweep) {
      runner::RunConfig cfg = sweep_flags.resolve();
      cfg.validate();
      const auto manifest = runner::load_manifest(sweep_manifest);
      const auto grid = sweep_grid.empty() ? runner::default_grid() : runner::parse_grid(sweep_grid);
      runner::HumanScores human;
      if (!sweep_scores.empty()) {
        human = runner::load_human_scores_csv(sweep_scores);
      } else {
        human = runner::AnnotationStore(cfg.out_dir / "annotations.jsonl").mean_scores();
      }
      if (!sweep_resume) {
        for (const MaskParams& p : grid) {
          if (store_has_results(runner::sweep_dir(cfg.out_dir, p))) {
            throw Error(ErrorKind::Precondition, runner::sweep_dir(cfg.out_dir, p).string() +
                                                     " already holds results; pass --resume to reuse them");
          }
        }
      }
      const auto rows = runner::run_sweep(manifest, cfg, grid, human);
      std::cout << runner::sweep_csv(rows);
    } else if (*report) {
      runner::RunConfig cfg = report_flags.resolve();
      cfg.threshold.validate();
      runner::ResultStore store(cfg.out_dir);
      std::optional<MaskParams> params;
      if (report_flags.alpha || report_flags.beta) params = cfg.mask_params;
      const auto files = runner::emit_report(store, cfg.threshold, cfg.model_label, params);
      std::cout << io::read_text(files.summary);
    } else if (*serve) {
      runner::RunConfig cfg = serve_flags.resolve();
      cfg.threshold.validate();
      runner::ReviewOptions options{cfg.out_dir, runner::load_manifest(serve_manifest), cfg.threshold, serve_ui};
      runner::ReviewServer server(std::move(options));
      const int port = server.bind(serve_bind);
      std::cerr << "serving on port " << port << '\n';
      server.run();
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
