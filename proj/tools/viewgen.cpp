#include <viewgen/viewgen.h>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitVerification = 3;

// Config text assembled in increasing priority: environment defaults, the
// --config file, then explicit flags.
struct ConfigText {
  std::string defaults;
  std::string file;
  std::string flags;

  std::string merged() const { return defaults + file + flags; }
};

template <typename V>
std::string to_text(const V& v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Records flag -> key bindings; only flags given on the command line are
// emitted, so config-file values survive unless overridden.
class Bindings {
 public:
  template <typename V>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, V& target,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help);
    emit_.push_back([opt, key, &target](std::string& out) {
      if (opt->count() > 0) out += key + "=" + to_text(target) + "\n";
    });
    return opt;
  }

  CLI::Option* add_list(CLI::App* app, const std::string& flag, const std::string& key,
                        std::vector<std::string>& target, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help)->delimiter(',');
    emit_.push_back([opt, key, &target](std::string& out) {
      if (opt->count() == 0) return;
      std::string joined;
      for (const auto& s : target) joined += (joined.empty() ? "" : ",") + s;
      out += key + "=" + joined + "\n";
    });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& flag, const std::string& key,
                        const std::string& value, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    emit_.push_back([opt, key, value](std::string& out) {
      if (opt->count() > 0) out += key + "=" + value + "\n";
    });
    return opt;
  }

  std::string text() const {
    std::string out;
    for (const auto& e : emit_) e(out);
    return out;
  }

 private:
  std::vector<std::function<void(std::string&)>> emit_;
};

void print_log(int level, const char* message, void*) {
  std::fprintf(stderr, "%s%s\n", level == VG_LOG_WARNING ? "warning: " : "", message);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int report(int status) {
  const char* out = vg_last_output();
  if (out && *out) std::fputs(out, stdout);
  std::fflush(stdout);
  if (status == VG_OK) return kExitOk;
  std::fprintf(stderr, "error: code=%s message=\"%s\"\n", vg_status_name(status),
               escape(vg_last_error_message()).c_str());
  if (status == VG_ERR_USAGE) return kExitUsage;
  if (status == VG_ERR_VERIFICATION) return kExitVerification;
  return kExitRuntime;
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  if (!out.empty() && out.back() != '\n') out += '\n';
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-view novel view generation: datasets, training, generation and evaluation."};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(
      "Config files hold key=value lines (run.*, dataset.*, train.*, gen.*, eval.*, grad.*).\n"
      "Flags override file values; unknown keys are rejected. VIEWGEN_DATA sets the default\n"
      "dataset directory. Exit codes: 0 ok, 1 runtime error, 2 usage error, 3 verification failure.");

  std::string config_path;
  int threads = 0;
  bool quiet = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key=value config file; flags take precedence");
  app.add_option("--threads", threads, "worker threads (0 = all cores; 1 = fully serial)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--set", sets, "extra key=value override, repeatable");
  app.add_flag("--quiet", quiet, "suppress progress messages");

  const char* env_data = std::getenv("VIEWGEN_DATA");
  const std::string data_default = env_data ? env_data : "";

  Bindings b;

  // render-dataset
  auto* render = app.add_subcommand("render-dataset", "Render the multi-view RGB-D training dataset");
  std::vector<std::string> classes;
  int instances = 0, size = 0, supersample = 0;
  unsigned long long first_seed = 0;
  double distance = 0, fov = 0;
  std::string grid, render_out;
  b.add_list(render, "--classes", "dataset.classes", classes, "comma-separated classes (default can,mug)");
  b.add(render, "--instances", "dataset.instances", instances, "instances per class (default 20)");
  b.add(render, "--first-seed", "dataset.first_seed", first_seed, "seed of the first instance (default 1)");
  b.add(render, "--grid", "dataset.grid", grid,
        "pose grid: training, evaluation or pitch:lo:hi:step,yaw:lo:hi:step (default training)");
  b.add(render, "--size", "dataset.size", size, "image side in pixels (default 64)");
  b.add(render, "--distance", "dataset.distance", distance, "camera distance (default 2.5)");
  b.add(render, "--fov", "dataset.fov", fov, "vertical field of view in degrees (default 40)");
  b.add(render, "--supersample", "dataset.supersample", supersample, "samples per pixel side (default 2)");
  b.add(render, "--out", "run.out", render_out, "dataset directory (default $VIEWGEN_DATA)");
  b.add_flag(render, "--force", "run.force", "true", "write into a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "Train one class-specific generator");
  std::string cls, train_data, train_out, model, pairing;
  long long iters = 0, checkpoint_every = 0, log_every = 0;
  int batch = 0;
  double lr = 0, clip_min = 0, clip_max = 0, rgb_w = 0, depth_w = 0, holdout = 0;
  unsigned long long train_seed = 0;
  b.add(train, "--class", "train.class", cls, "object class to train (default can)");
  b.add(train, "--data", "run.data", train_data, "dataset directory (default $VIEWGEN_DATA)");
  b.add(train, "--out", "run.out", train_out, "run directory for checkpoints and logs");
  b.add(train, "--model", "train.model", model, "network preset: desk, micro or full (default desk)");
  b.add(train, "--iters", "train.iterations", iters, "batch updates (default 5000)");
  b.add(train, "--batch", "train.batch_size", batch, "pairs per batch, >= 2 (default 16)");
  b.add(train, "--lr", "train.learning_rate", lr, "Adam learning rate (default 0.0005)");
  b.add(train, "--seed", "train.seed", train_seed, "initialization and sampling seed (default 1)");
  b.add(train, "--clip-min", "train.clip_min", clip_min, "lower gradient clip (default -1)");
  b.add(train, "--clip-max", "train.clip_max", clip_max, "upper gradient clip (default 1)");
  b.add(train, "--rgb-weight", "train.rgb_weight", rgb_w, "RGB loss weight (default 1)");
  b.add(train, "--depth-weight", "train.depth_weight", depth_w, "depth loss weight (default 1)");
  b.add(train, "--holdout", "train.holdout_fraction", holdout,
        "fraction of instances held out, taken from the highest seeds (default 0.2)");
  b.add(train, "--checkpoint-every", "train.checkpoint_every", checkpoint_every,
        "iterations between checkpoints, 0 = none (default 1000)");
  b.add(train, "--log-every", "train.log_every", log_every, "iterations between log lines (default 100)");
  b.add(train, "--pairing", "train.pairing", pairing, "random or identity (default random)");
  b.add_flag(train, "--force", "run.force", "true", "write into a non-empty directory");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate novel views of an object in one image");
  std::string input, mask, checkpoint, registry, gen_class, override_class, angles, sweep, gen_out;
  double pitch = 0;
  b.add(gen, "--input", "gen.input", input, "input image (PNG)");
  b.add(gen, "--mask", "gen.mask", mask, "object mask (PNG, nonzero = object)");
  b.add_flag(gen, "--auto-segment", "gen.auto_segment", "true",
             "find the object by background thresholding instead of --mask");
  b.add(gen, "--checkpoint", "gen.checkpoint", checkpoint, "single model checkpoint");
  b.add(gen, "--registry", "gen.registry", registry, "class=checkpoint registry file");
  b.add(gen, "--class", "gen.class", gen_class, "class label of the input object");
  b.add(gen, "--override-class", "gen.override_class", override_class,
        "generate with this class's model instead (conversion mode)");
  b.add(gen, "--angles", "gen.angles", angles, "comma-separated dyaw or dyaw:dpitch queries in degrees");
  b.add(gen, "--sweep", "gen.sweep", sweep, "yaw sweep start:stop:step, stop excluded (e.g. 0:360:12)");
  b.add(gen, "--pitch", "gen.pitch", pitch, "delta pitch applied to every sweep frame (default 0)");
  b.add(gen, "--out", "run.out", gen_out, "output directory");
  b.add_flag(gen, "--force", "run.force", "true", "write into a non-empty directory");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score generated views against rendered references");
  std::string eval_registry, eval_data, eval_out, generator, split, exclude_grid;
  std::vector<std::string> eval_classes;
  long long inputs_per_instance = 0;
  unsigned long long eval_seed = 0;
  double eval_holdout = 0, continuity_step = 0;
  b.add(eval, "--registry", "eval.registry", eval_registry, "class=checkpoint registry file");
  b.add(eval, "--data", "run.data", eval_data, "dataset directory (default $VIEWGEN_DATA)");
  b.add(eval, "--out", "run.out", eval_out, "report directory");
  b.add(eval, "--generator", "eval.generator", generator,
        "net, or oracle to score the references against themselves (default net)");
  b.add_list(eval, "--classes", "eval.classes", eval_classes, "classes to score (default: all registered)");
  b.add(eval, "--split", "eval.split", split, "instances to score: all, train or holdout (default all)");
  b.add(eval, "--holdout", "eval.holdout_fraction", eval_holdout,
        "holdout fraction used by --split (default 0.2)");
  b.add(eval, "--inputs-per-instance", "eval.inputs_per_instance", inputs_per_instance,
        "input views drawn per instance (default 2)");
  b.add(eval, "--seed", "eval.seed", eval_seed, "seed for choosing input views (default 7)");
  b.add_flag(eval, "--heldout-poses-only", "eval.heldout_poses_only", "true",
             "score only target poses absent from the training grid");
  b.add(eval, "--exclude-grid", "eval.exclude_grid", exclude_grid, "score only poses absent from this grid");
  b.add_flag(eval, "--no-continuity", "eval.continuity", "false", "skip the 360 degree continuity sweep");
  b.add(eval, "--continuity-step", "eval.continuity_step", continuity_step,
        "yaw step of the continuity sweep (default 6)");
  b.add_flag(eval, "--force", "run.force", "true", "write into a non-empty directory");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  std::string grad_model, precision;
  int seeds = 0;
  double eps = 0, tolerance = 0;
  b.add(grad, "--model", "grad.model", grad_model, "network preset (default micro)");
  b.add(grad, "--precision", "grad.precision", precision, "f64 or f32 (default f64)");
  b.add(grad, "--seeds", "grad.seeds", seeds, "seeds per check (default 5)");
  b.add(grad, "--eps", "grad.eps", eps, "central difference step (default 1e-5 for f64, 1e-2 for f32)");
  b.add(grad, "--tolerance", "grad.tolerance", tolerance,
        "largest accepted relative error (default 1e-3 for f64, 5e-2 for f32)");
  b.add_flag(grad, "--ops-only", "grad.network", "false", "skip the whole-network check");

  // info
  auto* info = app.add_subcommand("info", "Print checkpoint metadata");
  std::string info_path;
  b.add(info, "checkpoint", "info.checkpoint", info_path, "checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: code=usage message=\"%s\"\n", escape(e.what()).c_str());
    return kExitUsage;
  }

  ConfigText cfg;
  if (!config_path.empty() && !read_file(config_path, cfg.file)) {
    std::fprintf(stderr, "error: code=io message=\"cannot read config file %s\"\n",
                 escape(config_path).c_str());
    return kExitRuntime;
  }
  cfg.flags = b.text();
  if (app.count("--threads") > 0) cfg.flags += "run.threads=" + std::to_string(threads) + "\n";
  for (const auto& s : sets) {
    if (s.find('=') == std::string::npos) {
      std::fprintf(stderr, "error: code=usage message=\"--set expects key=value, got %s\"\n",
                   escape(s).c_str());
      return kExitUsage;
    }
    cfg.flags += s + "\n";
  }
  if (!quiet) vg_set_log_handler(print_log, nullptr);

  if (render->parsed()) {
    if (!data_default.empty()) cfg.defaults = "run.out=" + data_default + "\n";
    return report(vg_run_render_dataset(cfg.merged().c_str()));
  }
  if (train->parsed()) {
    if (!data_default.empty()) cfg.defaults = "run.data=" + data_default + "\n";
    return report(vg_run_train(cfg.merged().c_str()));
  }
  if (gen->parsed()) return report(vg_run_generate(cfg.merged().c_str()));
  if (eval->parsed()) {
    if (!data_default.empty()) cfg.defaults = "run.data=" + data_default + "\n";
    return report(vg_run_evaluate(cfg.merged().c_str()));
  }
  if (grad->parsed()) {
    double max_error = 0;
    return report(vg_run_gradcheck(cfg.merged().c_str(), &max_error));
  }
  if (info->parsed()) return report(vg_run_info(cfg.merged().c_str()));
  return kExitUsage;
}
