#include "rnan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rnan/data.hpp"
#include "rnan/evaluate.hpp"
#include "rnan/gradsuite.hpp"
#include "rnan/image.hpp"
#include "rnan/metrics.hpp"
#include "rnan/model.hpp"
#include "rnan/resize.hpp"
#include "rnan/runconfig.hpp"
#include "rnan/trainer.hpp"

namespace fs = std::filesystem;

namespace rnan {

namespace {

std::vector<std::string> list_pngs(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_prepare(const std::string& hr_dir, const std::string& out_dir,
                const std::vector<int>& scales) {
  const auto names = list_pngs(hr_dir);
  if (names.empty()) {
    std::cerr << "prepare: no .png files in " << hr_dir << "\n";
    return 1;
  }
  fs::create_directories(fs::path(out_dir) / "HR");
  for (const auto& n : names)
    fs::copy_file(fs::path(hr_dir) / n, fs::path(out_dir) / "HR" / n,
                  fs::copy_options::overwrite_existing);
  for (int s : scales) {
    const fs::path lr_dir = fs::path(out_dir) / ("LR_x" + std::to_string(s));
    fs::create_directories(lr_dir);
    DatasetSpec ds;
    ds.scale = s;
    for (const auto& n : names) {
      const ImageU8 hr = modcrop(load_png((fs::path(hr_dir) / n).string()), s);
      const ImageF lr =
          bicubic_resize(to_float(hr), hr.width / s, hr.height / s);
      save_png(to_u8(lr), (lr_dir / n).string());
      ds.items.push_back({(fs::path(out_dir) / "HR" / n).string(),
                          (lr_dir / n).string()});
    }
    save_manifest(ds, (fs::path(out_dir) / ("manifest_x" + std::to_string(s) + ".txt")).string());
    std::printf("prepare: wrote %zu LR_x%d images\n", names.size(), s);
  }
  return 0;
}

// `weights` is a weight-file path or the literal "bicubic"
ModelFn resolve_model(const std::string& weights, int scale, int tile,
                      int overlap, int* model_scale) {
  if (weights == "bicubic") {
    if (scale < 2 || scale > 4)
      throw std::runtime_error("the bicubic model needs --scale in {2,3,4}");
    *model_scale = scale;
    return bicubic_model_fn(scale);
  }
  static RnanWeights<float> loaded;  // keeps the closure cheap to copy
  loaded = load_weights<float>(weights);
  if (scale != 0 && scale != loaded.cfg.scale)
    throw std::runtime_error("--scale " + std::to_string(scale) +
                             " does not match the weight file (scale " +
                             std::to_string(loaded.cfg.scale) + ")");
  *model_scale = loaded.cfg.scale;
  return make_model_fn(loaded, {}, tile, overlap);
}

int cmd_eval(const std::string& weights, const std::string& data_dir,
             int scale, bool ensemble, int shave, const std::string& csv_out) {
  int model_scale = 0;
  const ModelFn fn = resolve_model(weights, scale, 0, 8, &model_scale);
  DatasetSpec ds = scan_dataset_root(data_dir, model_scale);
  EvalReport report = evaluate_dataset(fn, ds, model_scale, ensemble, shave);
  report.dataset = fs::path(data_dir).filename().string();
  std::cout << report.to_text();
  if (!csv_out.empty()) {
    std::ofstream os(csv_out, std::ios::trunc);
    os << report.to_csv();
  }
  return 0;
}

int cmd_upscale(const std::string& weights, const std::string& input,
                const std::string& output, bool ensemble, int scale, int tile,
                int overlap) {
  int model_scale = 0;
  const ModelFn fn = resolve_model(weights, scale, tile, overlap, &model_scale);
  const ImageF lr = to_float(load_png(input));
  const ImageF sr = ensemble ? self_ensemble(fn, lr) : fn(lr);
  save_png(to_u8(sr), output);
  std::printf("upscale: %dx%d -> %dx%d (%s)\n", lr.width, lr.height, sr.width,
              sr.height, output.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& op_filter, bool model_tiny,
                  uint64_t seed) {
  bool ok = true;
  if (!model_tiny) {
    for (const auto& r : run_op_grad_suite(seed)) {
      if (!op_filter.empty() && r.op != op_filter) continue;
      const bool pass = r.max_rel_err < 1e-4;
      ok = ok && pass;
      std::printf("%-22s max rel err %.3e  %s\n", r.op.c_str(), r.max_rel_err,
                  pass ? "ok" : "FAIL");
    }
    if (!op_filter.empty()) return ok ? 0 : 1;
  }
  double worst = 0.0;
  for (const auto& r : run_model_grad_check(seed)) {
    worst = std::max(worst, r.rel_err);
    if (r.rel_err >= 1e-3) {
      ok = false;
      std::printf("model param %s[%lld] rel err %.3e  FAIL\n", r.param.c_str(),
                  static_cast<long long>(r.index), r.rel_err);
    }
  }
  std::printf("%-22s max rel err %.3e  %s\n", "model_tiny", worst,
              worst < 1e-3 ? "ok" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_params(const std::string& config_path) {
  ModelConfig cfg;
  if (!config_path.empty()) cfg = RunConfig::from_file(config_path).model;
  for (const auto& row : count_params_breakdown(cfg))
    std::printf("%-16s %12lld\n", row.stage.c_str(),
                static_cast<long long>(row.params));
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& sets, uint64_t seed,
              bool seed_given, const std::string& out_flag) {
  RunConfig cfg = config_path.empty() ? RunConfig()
                                      : RunConfig::from_file(config_path);
  for (const auto& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_given) cfg.train.seed = seed;
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.data_root.empty())
    throw std::runtime_error("train: data_root must be set (directory with HR/ and LR_x{scale}/)");
  if (cfg.train.total_epochs < 1)
    throw std::runtime_error("train: total_epochs must be set (the schedule has no default length)");

  DatasetSpec ds = scan_dataset_root(cfg.data_root, cfg.model.scale, cfg.train.seed);

  if (cfg.train.precision == "float64") {
    BatchStream<double> stream(ds, cfg.train.patch, cfg.train.batch_size);
    Trainer<double> trainer =
        cfg.resume.empty()
            ? Trainer<double>(init_params<double>(cfg.model, cfg.train.seed), cfg.train)
            : Trainer<double>::load_checkpoint(cfg.resume, cfg.model);
    if (!cfg.resume.empty()) trainer.set_schedule(cfg.train);
    const TrainResult res = train_loop(trainer, stream, cfg.out_dir);
    std::printf("train: %lld steps, final loss %.6g\n",
                static_cast<long long>(res.steps_run), res.final_loss);
  } else {
    BatchStream<float> stream(ds, cfg.train.patch, cfg.train.batch_size);
    Trainer<float> trainer =
        cfg.resume.empty()
            ? Trainer<float>(init_params<float>(cfg.model, cfg.train.seed), cfg.train)
            : Trainer<float>::load_checkpoint(cfg.resume, cfg.model);
    if (!cfg.resume.empty()) trainer.set_schedule(cfg.train);
    const TrainResult res = train_loop(trainer, stream, cfg.out_dir);
    std::printf("train: %lld steps, final loss %.6g\n",
                static_cast<long long>(res.steps_run), res.final_loss);
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"single-image super-resolution: training, evaluation, inference"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "bicubically downscale an HR set and write LR trees + manifests");
  std::string hr_dir, out_dir;
  std::vector<int> scales{2, 3, 4};
  prepare->add_option("hr_dir", hr_dir, "directory of HR .png images")->required();
  prepare->add_option("out_dir", out_dir, "output dataset root")->required();
  prepare->add_option("--scales", scales, "scales to generate");

  // train
  auto* train = app.add_subcommand("train", "run the optimization loop");
  std::string config_path, train_out;
  std::vector<std::string> sets;
  uint64_t train_seed = 0;
  bool train_seed_given = false;
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--set", sets, "override one config key, key=value");
  train->add_option("--out", train_out, "output directory override");
  train->add_option("--seed", train_seed, "seed override")
      ->each([&](const std::string&) { train_seed_given = true; });

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM report over a prepared dataset");
  std::string eval_weights, eval_data, eval_csv;
  int eval_scale = 0, eval_shave = -1;
  bool eval_ensemble = false;
  eval->add_option("weights", eval_weights, "weight file or 'bicubic'")->required();
  eval->add_option("data_dir", eval_data, "dataset root (HR/ + LR_x{s}/)")->required();
  eval->add_option("--scale", eval_scale, "upscaling factor (required for 'bicubic')");
  eval->add_flag("--ensemble", eval_ensemble, "self-ensemble over the 8 dihedral transforms");
  eval->add_option("--shave", eval_shave, "border pixels excluded from metrics (default: scale)");
  eval->add_option("--csv", eval_csv, "also write the report as CSV");

  // upscale
  auto* upscale = app.add_subcommand("upscale", "super-resolve one PNG");
  std::string up_weights, up_in, up_out;
  int up_scale = 0, up_tile = 0, up_overlap = 8;
  bool up_ensemble = false;
  upscale->add_option("weights", up_weights, "weight file or 'bicubic'")->required();
  upscale->add_option("input", up_in, "input PNG")->required();
  upscale->add_option("output", up_out, "output PNG")->required();
  upscale->add_option("--scale", up_scale, "upscaling factor (required for 'bicubic')");
  upscale->add_flag("--ensemble", up_ensemble, "self-ensemble inference");
  upscale->add_option("--tile", up_tile, "LR tile size for bounded-memory inference (0 = whole image)");
  upscale->add_option("--overlap", up_overlap, "LR overlap between tiles");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  std::string gc_op;
  bool gc_model = false;
  uint64_t gc_seed = 0;
  gradcheck->add_option("--op", gc_op, "check a single op by name");
  gradcheck->add_flag("--model-tiny", gc_model, "only the tiny end-to-end check");
  gradcheck->add_option("--seed", gc_seed, "suite seed");

  // params
  auto* params = app.add_subcommand("params", "parameter count breakdown");
  std::string params_config;
  params->add_option("--config", params_config, "key = value config file");

  try {
    app.parse(argc, argv);
    if (prepare->parsed()) return cmd_prepare(hr_dir, out_dir, scales);
    if (train->parsed())
      return cmd_train(config_path, sets, train_seed, train_seed_given, train_out);
    if (eval->parsed())
      return cmd_eval(eval_weights, eval_data, eval_scale, eval_ensemble,
                      eval_shave, eval_csv);
    if (upscale->parsed())
      return cmd_upscale(up_weights, up_in, up_out, up_ensemble, up_scale,
                         up_tile, up_overlap);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_op, gc_model, gc_seed);
    if (params->parsed()) return cmd_params(params_config);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rnan
