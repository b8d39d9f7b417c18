#include "chromaflow/cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "chromaflow/error.h"
#include "chromaflow/image_io.h"

namespace chromaflow::cli {

namespace {

namespace fs = std::filesystem;

std::string usage();

struct Parser {
  CLI::App app{"Progressive color transfer between semantically related images.", "chromaflow"};
  CliConfig cfg;
  std::string backend = "toy";
  CLI::App* single = nullptr;
  CLI::App* multi = nullptr;
  CLI::App* colorize = nullptr;
  CLI::App* select = nullptr;

  Parser() {
    app.option_defaults()->always_capture_default();
    app.set_help_flag("-h,--help", "Print this help message and exit");
    app.set_config("--config", "", "Flat key = value file, one key per long flag")
        ->envname("CHROMAFLOW_CONFIG");
    app.require_subcommand(1);

    single = app.add_subcommand("single", "Transfer colors from one reference");
    multi = app.add_subcommand("multi", "Transfer colors merged from several references");
    colorize = app.add_subcommand("colorize", "Colorize a grayscale source");
    select = app.add_subcommand("select-refs", "Pick a representative reference subset");
    for (CLI::App* sub : {single, multi, colorize, select}) sub->fallthrough();

    auto& tp = cfg.pipeline.transfer;
    auto& mp = cfg.pipeline.merge;
    app.add_option("--source", cfg.source, "Source image (PNG or JPEG)");
    app.add_option("--reference", cfg.references, "Reference image; repeatable");
    app.add_option("--refs-dir", cfg.refs_dir, "Folder of candidate references");
    app.add_option("--out", cfg.out, "Output PNG");
    app.add_option("--backend", backend, "Feature backend")
        ->check(CLI::IsMember({"toy", "file"}));
    app.add_option("--features-src", cfg.features_src, "Source feature pyramid (.fpyr)");
    app.add_option("--features-ref", cfg.features_ref, "Reference feature pyramid; repeatable");
    app.add_option("--exporter-cmd", cfg.exporter_cmd,
                   "Command run as '<cmd> <png> <fpyr> --level L' in file mode");
    app.add_option("--workdir", cfg.workdir, "Directory for checkpoints and artifacts");
    app.add_flag("--dump-artifacts", cfg.dump_artifacts,
                 "Write per-level NNF, guidance and intermediate PNGs to the workdir");
    app.add_option("--seed", cfg.pipeline.seed, "Random seed");
    app.add_option("--count", cfg.count, "Number of references to select")
        ->check(CLI::PositiveNumber);

    app.add_option("--lambda-l", tp.lambda_l, "Local smoothness weight");
    app.add_option("--lambda-nl", tp.lambda_nl, "Non-local consistency weight");
    app.add_option("--alpha", tp.alpha, "Smoothness weight exponent");
    app.add_option("--eps-w", tp.eps_w, "Smoothness weight epsilon");
    app.add_option("--eps-std", tp.eps_std, "Std epsilon of the initial transfer");
    app.add_option("--k-clusters", tp.k_clusters, "Semantic clusters")
        ->check(CLI::PositiveNumber);
    app.add_option("--k-neighbors", tp.k_neighbors, "Non-local neighbors per pixel")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--patch", tp.patch, "Patch size (odd)");
    app.add_option("--wls-lambda", tp.wls_upsample_lambda, "WLS upsampling weight");
    app.add_option("--cg-max-iters", tp.cg_max_iters, "Transfer solver iterations")
        ->check(CLI::PositiveNumber);
    app.add_option("--cg-rel-tol", tp.cg_rel_tol, "Transfer solver relative tolerance");
    app.add_option("--bds-w", cfg.pipeline.bds_w, "Completeness weight of the vote");
    app.add_option("--patchmatch-iters", cfg.pipeline.patchmatch_iters, "PatchMatch iterations")
        ->check(CLI::PositiveNumber);
    app.add_option("--beta-c", mp.beta_c, "Majority color weight of the merge");
    app.add_option("--beta-l", mp.beta_l, "Label smoothness weight of the merge");
    app.add_option("--hist-bins", mp.hist_bins, "Majority histogram bins per channel")
        ->check(CLI::PositiveNumber);
  }

  void validate() {
    auto fail = [](const std::string& msg) { throw UsageError(msg, usage()); };
    cfg.pipeline.backend = backend == "file" ? Backend::kFile : Backend::kToy;
    if (select->parsed()) {
      cfg.mode = Mode::kSelectRefs;
      if (cfg.refs_dir.empty()) fail("select-refs requires --refs-dir");
      return;
    }
    cfg.mode = single->parsed() ? Mode::kSingle
               : multi->parsed() ? Mode::kMulti
                                 : Mode::kColorize;
    if (cfg.source.empty()) fail("--source is required");
    if (cfg.out.empty()) fail("--out is required");
    if (cfg.mode == Mode::kSingle) {
      if (cfg.references.size() != 1) fail("single mode requires exactly one --reference");
      if (!cfg.refs_dir.empty()) fail("--refs-dir is not used in single mode");
    } else if (cfg.references.empty() && cfg.refs_dir.empty()) {
      fail("at least one --reference or a --refs-dir is required");
    } else if (!cfg.references.empty() && !cfg.refs_dir.empty()) {
      fail("--reference and --refs-dir are mutually exclusive");
    }
    if (cfg.pipeline.transfer.patch < 1 || cfg.pipeline.transfer.patch % 2 == 0) {
      fail("--patch must be a positive odd number");
    }
    if (cfg.pipeline.backend == Backend::kToy) {
      if (!cfg.features_src.empty() || !cfg.features_ref.empty() || !cfg.exporter_cmd.empty()) {
        fail("--features-src, --features-ref and --exporter-cmd require --backend file");
      }
    } else {
      if (!cfg.features_ref.empty() && cfg.features_ref.size() != cfg.references.size()) {
        fail("give one --features-ref per --reference");
      }
      if (cfg.exporter_cmd.empty() && cfg.features_ref.empty()) {
        fail("file backend requires --features-ref or --exporter-cmd");
      }
    }
  }
};

// Top-level help; App::help() on a parsed app shows only the chosen subcommand.
std::string usage() { return Parser().app.help(); }

template <typename F>
auto in_stage(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

RgbImage nnf_image(const NnField& f) {
  RgbImage img(f.width, f.height);
  const float sx = f.target_width > 1 ? 1.0f / (f.target_width - 1) : 0.0f;
  const float sy = f.target_height > 1 ? 1.0f / (f.target_height - 1) : 0.0f;
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      float* p = img.pixel(x, y);
      p[0] = f.at(x, y).x * sx;
      p[1] = f.at(x, y).y * sy;
    }
  }
  return img;
}

RgbImage label_image(const LabelMap& labels, int count) {
  RgbImage img(labels.width, labels.height);
  const float scale = count > 1 ? 1.0f / (count - 1) : 0.0f;
  for (std::size_t p = 0; p < labels.label.size(); ++p) {
    std::fill_n(&img.data[3 * p], 3, labels.label[p] * scale);
  }
  return img;
}

void dump_artifacts(const RunArtifacts& art, const fs::path& dir) {
  fs::create_directories(dir);
  for (const LevelArtifacts& lv : art.levels) {
    const std::string prefix = "L" + std::to_string(lv.level) + "_";
    for (std::size_t i = 0; i < lv.forward.size(); ++i) {
      write_png(nnf_image(lv.forward[i]), dir / (prefix + "nnf_fwd_" + std::to_string(i) + ".png"));
      write_png(nnf_image(lv.backward[i]), dir / (prefix + "nnf_bwd_" + std::to_string(i) + ".png"));
    }
    if (!lv.labels.label.empty()) {
      write_png(label_image(lv.labels, static_cast<int>(lv.forward.size())),
                dir / (prefix + "labels.png"));
    }
    write_png(lab_to_srgb(lv.guidance), dir / (prefix + "guidance.png"));
    write_png(lab_to_srgb(lv.intermediate), dir / (prefix + "intermediate.png"));
  }
}

int execute(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.mode == Mode::kSelectRefs) {
    const auto picked =
        in_stage("reference selection", [&] { return select_references(cfg.refs_dir, cfg.count, &err); });
    for (const auto& p : picked) out << p.string() << "\n";
    return 0;
  }

  std::vector<std::string> ref_paths = cfg.references;
  if (ref_paths.empty()) {
    for (const auto& p : in_stage("reference selection", [&] {
           return select_references(cfg.refs_dir, cfg.count, &err);
         })) {
      ref_paths.push_back(p.string());
    }
  }

  const RgbImage source_rgb = in_stage("read source", [&] { return read_image(cfg.source); });
  std::vector<RgbImage> refs;
  for (const auto& p : ref_paths) refs.push_back(in_stage("read reference", [&] { return read_image(p); }));

  PipelineConfig pcfg = cfg.pipeline;
  pcfg.keep_artifacts = cfg.dump_artifacts;
  const fs::path workdir = cfg.workdir;

  std::vector<FeaturePyramid> pyramids;
  std::unique_ptr<FeatureProvider> provider;
  in_stage("reference features", [&] {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (pcfg.backend == Backend::kToy) {
        pyramids.push_back(toy_pyramid(refs[i]));
      } else if (!cfg.features_ref.empty()) {
        pyramids.push_back(read_pyramid(cfg.features_ref[i]));
      } else {
        fs::create_directories(workdir);
        pyramids.push_back(run_exporter(cfg.exporter_cmd, ref_paths[i],
                                        workdir / ("reference_" + std::to_string(i) + ".fpyr")));
      }
    }
    return 0;
  });
  if (pcfg.backend == Backend::kToy) {
    provider = std::make_unique<ToyFeatureProvider>();
  } else {
    std::optional<FeaturePyramid> src_pyr;
    if (!cfg.features_src.empty()) {
      src_pyr = in_stage("source features", [&] { return read_pyramid(cfg.features_src); });
    }
    provider = std::make_unique<CheckpointFeatureProvider>(workdir, cfg.exporter_cmd,
                                                           std::move(src_pyr));
  }

  TransferResult result;
  switch (cfg.mode) {
    case Mode::kSingle:
      result = transfer_single(source_rgb, refs[0], *provider, pyramids[0], pcfg);
      break;
    case Mode::kMulti:
      result = transfer_multi(source_rgb, refs, *provider, pyramids, pcfg);
      break;
    default:
      result = colorize(srgb_to_gray(source_rgb), refs, *provider, pyramids, pcfg);
      break;
  }

  in_stage("write output", [&] {
    const fs::path out_path = cfg.out;
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(result.image, out_path);
    return 0;
  });
  if (cfg.dump_artifacts) {
    in_stage("dump artifacts", [&] {
      dump_artifacts(result.artifacts, workdir);
      return 0;
    });
  }
  return 0;
}

}  // namespace

CliConfig parse_args(const std::vector<std::string>& args) {
  Parser parser;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    parser.app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(usage());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(parser.app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), usage());
  }
  parser.validate();
  return parser.cfg;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CliConfig cfg;
  try {
    cfg = parse_args(args);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << e.usage();
    return 2;
  }
  try {
    return execute(cfg, out, err);
  } catch (const StageError& e) {
    err << "error: stage '" << e.stage() << "' failed: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace chromaflow::cli
