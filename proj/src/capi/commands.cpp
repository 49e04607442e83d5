#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>

#include "dataset.hpp"
#include "evaluator.hpp"
#include "extractor.hpp"
#include "files.hpp"
#include "gradient_suite.hpp"
#include "parallel.hpp"
#include "trainer.hpp"

namespace viewgen::cmd {

namespace fs = std::filesystem;

namespace {

int take_threads(KeyValues& kv) {
  const auto t = kv.take_int("run.threads", 0);
  require(t >= 0, ErrorCode::kConfig, "run.threads must be >= 0");
  return t == 0 ? hardware_threads() : static_cast<int>(t);
}

GridSpec grid_from(const std::string& text) {
  if (text == "training") return GridSpec::training();
  if (text == "evaluation") return GridSpec::evaluation();
  return GridSpec::parse(text);
}

fs::path need_path(const std::string& value, const char* what) {
  require(!value.empty(), ErrorCode::kUsage, std::string("missing ") + what);
  return fs::path(value);
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (auto s : seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// "a,b,c" where each entry is "dyaw" or "dyaw:dpitch".
std::vector<AngleQuery> parse_angles(const std::string& text) {
  std::vector<AngleQuery> out;
  for (const auto& item : split(text, ',')) {
    const auto f = split(trim(item), ':');
    require(f.size() == 1 || f.size() == 2, ErrorCode::kConfig,
            "angle '" + item + "' is not dyaw or dyaw:dpitch");
    try {
      AngleQuery q{std::stod(f[0]), f.size() == 2 ? std::stod(f[1]) : 0.0};
      out.push_back(q);
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "angle '" + item + "' is not numeric");
    }
  }
  require(!out.empty(), ErrorCode::kConfig, "empty angle list");
  return out;
}

// start:stop:step with stop excluded.
std::vector<AngleQuery> parse_sweep(const std::string& text, double pitch) {
  const auto f = split(text, ':');
  require(f.size() == 3, ErrorCode::kConfig, "sweep '" + text + "' is not start:stop:step");
  double start = 0, stop = 0, step = 0;
  try {
    start = std::stod(f[0]);
    stop = std::stod(f[1]);
    step = std::stod(f[2]);
  } catch (const std::exception&) {
    fail(ErrorCode::kConfig, "sweep '" + text + "' is not numeric");
  }
  require(step > 0 && stop > start, ErrorCode::kConfig, "sweep needs step > 0 and stop > start");
  std::vector<AngleQuery> out;
  for (std::size_t k = 0;; ++k) {
    const double yaw = start + static_cast<double>(k) * step;
    if (yaw >= stop - 1e-9) break;
    out.push_back({yaw, pitch});
  }
  return out;
}

Image as_rgb(const Image& img) {
  if (img.channels == 3) return img;
  require(img.channels == 1, ErrorCode::kFormat, "input image must be gray or RGB");
  Image out = Image::blank(3, img.height, img.width);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.plane());
  return out;
}

Image binary_mask(const Image& img) {
  Image out = Image::blank(1, img.height, img.width);
  for (std::size_t i = 0; i < img.plane(); ++i) out.data[i] = img.data[i] > 0.5f ? 1.0f : 0.0f;
  return out;
}

Image largest_object(const Image& rgb) {
  const auto dets = segment_background_threshold(rgb);
  require(!dets.empty(), ErrorCode::kInvalidCrop, "auto-segmentation found no object");
  const Detection* best = &dets[0];
  double best_area = -1;
  for (const auto& d : dets) {
    double area = 0;
    for (float v : d.mask.data) area += v;
    if (area > best_area) {
      best_area = area;
      best = &d;
    }
  }
  Image mask = Image::blank(1, rgb.height, rgb.width);
  for (int y = 0; y < best->bbox.height; ++y)
    for (int x = 0; x < best->bbox.width; ++x)
      mask.at(0, best->bbox.y + y, best->bbox.x + x) = best->mask.at(0, y, x);
  return mask;
}

}  // namespace

void render_dataset(KeyValues& kv, Context& ctx) {
  DatasetOptions opt;
  const std::string out = kv.take_string("run.out", "");
  opt.overwrite = kv.take_bool("run.force", false);
  opt.threads = take_threads(kv);
  opt.classes = kv.take_string_list("dataset.classes", opt.classes);
  opt.instances = static_cast<int>(kv.take_int("dataset.instances", opt.instances));
  opt.first_seed = kv.take_u64("dataset.first_seed", opt.first_seed);
  opt.grid = grid_from(kv.take_string("dataset.grid", "training"));
  opt.size = static_cast<int>(kv.take_int("dataset.size", opt.size));
  opt.distance = kv.take_double("dataset.distance", opt.distance);
  opt.fov = kv.take_double("dataset.fov", opt.fov);
  opt.supersample = static_cast<int>(kv.take_int("dataset.supersample", opt.supersample));
  kv.finish();
  const fs::path root = need_path(out, "output directory (--out or VIEWGEN_DATA)");
  require(!opt.classes.empty(), ErrorCode::kConfig, "dataset.classes is empty");
  require(opt.instances >= 1, ErrorCode::kConfig, "dataset.instances must be >= 1");
  require(opt.supersample >= 1, ErrorCode::kConfig, "dataset.supersample must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  ctx.info("rendering " + join(opt.classes) + " x " + std::to_string(opt.instances) +
           " instances at " + std::to_string(opt.size) + "px");
  const auto manifest = generate_dataset(opt, root);
  // Only dataset keys, so that two renders of the same dataset stay
  // byte-identical whatever their location and thread count.
  std::string echo;
  echo += "dataset.classes=" + join(opt.classes) + "\n";
  echo += "dataset.instances=" + std::to_string(opt.instances) + "\n";
  echo += "dataset.first_seed=" + std::to_string(opt.first_seed) + "\n";
  echo += "dataset.grid=" + opt.grid.to_string() + "\n";
  echo += "dataset.size=" + std::to_string(opt.size) + "\n";
  echo += "dataset.distance=" + format_double(opt.distance) + "\n";
  echo += "dataset.fov=" + format_double(opt.fov) + "\n";
  echo += "dataset.supersample=" + std::to_string(opt.supersample) + "\n";
  write_file_atomic(root / "render_config.txt", echo);
  ctx.info("rendered " + std::to_string(manifest.records.size()) + " views in " +
           format_double(std::round(seconds_since(t0) * 10) / 10) + " s");
  ctx.output = "records=" + std::to_string(manifest.records.size()) + "\nmanifest=" +
               (root / "manifest.txt").string() + "\n";
}

void train(KeyValues& kv, Context& ctx) {
  const std::string data = kv.take_string("run.data", "");
  const std::string out_text = kv.take_string("run.out", "");
  const bool force = kv.take_bool("run.force", false);
  const int threads = take_threads(kv);
  const TrainConfig cfg = TrainConfig::from_kv(kv);
  kv.finish();
  const fs::path root = need_path(data, "dataset directory (--data or VIEWGEN_DATA)");
  const fs::path out = need_path(out_text, "output directory (--out)");

  const auto manifest = DatasetManifest::load(root);
  const auto net_config = ViewNetConfig::preset(cfg.model);
  require(net_config.input_size == manifest.size, ErrorCode::kConfig,
          "model '" + cfg.model + "' expects " + std::to_string(net_config.input_size) +
              "px images but the dataset has " + std::to_string(manifest.size) + "px");
  prepare_output_dir(out, force);

  std::string echo = cfg.to_text();
  echo += "run.data=" + root.string() + "\n";
  echo += "run.out=" + out.string() + "\n";
  echo += "run.threads=" + std::to_string(threads) + "\n";
  for (const auto& line : split(net_config.to_text(), '\n')) {
    if (!line.empty()) echo += "# network " + line + "\n";
  }
  write_file_atomic(out / "train_config.txt", echo);

  const auto t0 = std::chrono::steady_clock::now();
  const auto set = TrainingSet::load(manifest, cfg.cls, cfg.holdout_fraction, threads);
  std::vector<std::uint64_t> train_seeds;
  for (const auto& inst : set.instances) train_seeds.push_back(inst.seed);
  write_file_atomic(out / "split.txt", "train_instances=" + join_seeds(train_seeds) +
                                           "\nholdout_instances=" + join_seeds(set.holdout) + "\n");
  ctx.info("loaded " + std::to_string(train_seeds.size()) + " training instances of '" + cfg.cls +
           "' (" + std::to_string(set.holdout.size()) + " held out)");

  auto net = ViewNet<float>::build(net_config, cfg.seed);
  std::vector<LossRecord> trace;
  TrainCallbacks cb;
  cb.on_iteration = [&](const LossRecord& r) {
    trace.push_back(r);
    if (cfg.log_every > 0 && (r.iteration % cfg.log_every == 0 || r.iteration == 1)) {
      char line[160];
      std::snprintf(line, sizeof(line), "iter %lld/%lld rgb=%.6f depth=%.6f total=%.6f (%.0f s)",
                    static_cast<long long>(r.iteration), static_cast<long long>(cfg.iterations),
                    r.rgb, r.depth, r.total, seconds_since(t0));
      ctx.info(line);
    }
  };
  cb.on_checkpoint = [&](std::int64_t it, const ViewNet<float>& n) {
    save_checkpoint(n, out / ("checkpoint_" + std::to_string(it) + ".vfck"));
  };
  try {
    viewgen::train(net, set, cfg, cb);
  } catch (const Error& e) {
    write_file_atomic(out / "loss.csv", loss_csv(trace, cfg));
    if (e.code() == ErrorCode::kDivergence) {
      save_checkpoint(net, out / "last_good.vfck");
      ctx.output = "diverged; last good model=" + (out / "last_good.vfck").string() + "\n";
    }
    throw;
  }
  write_file_atomic(out / "loss.csv", loss_csv(trace, cfg));
  save_checkpoint(net, out / "model.vfck");
  ctx.info("trained in " + format_double(std::round(seconds_since(t0))) + " s");
  ctx.output = "class=" + cfg.cls + "\niterations=" + std::to_string(cfg.iterations) +
               "\nfinal_loss=" + (trace.empty() ? std::string("nan") : format_double(trace.back().total)) +
               "\nmodel=" + (out / "model.vfck").string() + "\n";
}

void generate(KeyValues& kv, Context& ctx) {
  const std::string input = kv.take_string("gen.input", "");
  const std::string mask_path = kv.take_string("gen.mask", "");
  const bool auto_segment = kv.take_bool("gen.auto_segment", false);
  const std::string checkpoint = kv.take_string("gen.checkpoint", "");
  const std::string registry_path = kv.take_string("gen.registry", "");
  const std::string cls = kv.take_string("gen.class", "");
  const std::string override_class = kv.take_string("gen.override_class", "");
  const std::string angles = kv.take_string("gen.angles", "");
  const std::string sweep = kv.take_string("gen.sweep", "");
  const double sweep_pitch = kv.take_double("gen.pitch", 0.0);
  const std::string out_text = kv.take_string("run.out", "");
  const bool force = kv.take_bool("run.force", false);
  take_threads(kv);
  kv.finish();

  const fs::path in_path = need_path(input, "input image (--input)");
  const fs::path out = need_path(out_text, "output directory (--out)");
  require(checkpoint.empty() != registry_path.empty(), ErrorCode::kUsage,
          "give exactly one of --checkpoint and --registry");
  require(!mask_path.empty() || auto_segment, ErrorCode::kUsage,
          "no object mask: pass --mask <png> or --auto-segment");
  require(mask_path.empty() || !auto_segment, ErrorCode::kUsage,
          "--mask and --auto-segment are mutually exclusive");
  require(angles.empty() != sweep.empty(), ErrorCode::kUsage,
          "give exactly one of --angles and --sweep");
  const auto queries = angles.empty() ? parse_sweep(sweep, sweep_pitch) : parse_angles(angles);

  ModelRegistry registry;
  std::string label = cls;
  if (!checkpoint.empty()) {
    if (label.empty()) label = "model";
    registry.add(label, fs::path(checkpoint));
  } else {
    registry = ModelRegistry::load(registry_path);
    require(!label.empty() || !override_class.empty(), ErrorCode::kUsage,
            "a registry needs --class or --override-class");
  }
  std::optional<std::string> override_opt;
  if (!override_class.empty()) override_opt = override_class;
  const ViewNet<float>& net = route(label, registry, override_opt);

  const Image rgb = as_rgb(read_png(in_path));
  Image mask;
  if (auto_segment) {
    mask = largest_object(rgb);
  } else {
    mask = binary_mask(read_png(mask_path));
    require(mask.width == rgb.width && mask.height == rgb.height, ErrorCode::kInvalidShape,
            "mask size differs from the input image");
  }
  const int size = net.config().input_size;
  const Tensor<float> x = view_input(rgb, mask, size);
  ctx.info("generating " + std::to_string(queries.size()) + " views");
  const auto views = cross_class_generate(x, label, registry, override_opt, queries);

  prepare_output_dir(out, force);
  write_sequence(views, out);
  Image shown = tensor_to_image(x);
  shown.channels = 3;
  shown.data.resize(3 * shown.plane());
  write_png(out / "input_normalized.png", shown, 8);
  std::string index = "index,delta_yaw,delta_pitch,rgb,depth\n";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%03zu", i);
    index += std::to_string(i) + "," + format_double(queries[i].delta_yaw) + "," +
             format_double(queries[i].delta_pitch) + ",rgb_" + name + ".png,depth_" + name + ".png\n";
  }
  write_file_atomic(out / "index.csv", index);
  std::string echo;
  echo += "gen.input=" + in_path.string() + "\n";
  echo += auto_segment ? "gen.auto_segment=true\n" : "gen.mask=" + mask_path + "\n";
  echo += checkpoint.empty() ? "gen.registry=" + registry_path + "\n" : "gen.checkpoint=" + checkpoint + "\n";
  echo += "gen.class=" + label + "\n";
  if (override_opt) echo += "gen.override_class=" + *override_opt + "\n";
  echo += angles.empty() ? "gen.sweep=" + sweep + "\ngen.pitch=" + format_double(sweep_pitch) + "\n"
                         : "gen.angles=" + angles + "\n";
  echo += "run.out=" + out.string() + "\n";
  write_file_atomic(out / "generate_config.txt", echo);
  ctx.output = "views=" + std::to_string(queries.size()) + "\nout=" + out.string() + "\n";
}

void evaluate(KeyValues& kv, Context& ctx) {
  const std::string data = kv.take_string("run.data", "");
  const std::string out_text = kv.take_string("run.out", "");
  const bool force = kv.take_bool("run.force", false);
  const int threads = take_threads(kv);
  const std::string generator = kv.take_string("eval.generator", "net");
  const std::string registry_path = kv.take_string("eval.registry", "");
  std::vector<std::string> classes = kv.take_string_list("eval.classes", {});
  const std::string split_mode = kv.take_string("eval.split", "all");
  const double holdout_fraction = kv.take_double("eval.holdout_fraction", 0.2);
  EvalOptions opt;
  opt.inputs_per_instance = static_cast<std::size_t>(
      std::max<std::int64_t>(1, kv.take_int("eval.inputs_per_instance", 2)));
  opt.seed = kv.take_u64("eval.seed", opt.seed);
  opt.threads = threads;
  const bool heldout_poses = kv.take_bool("eval.heldout_poses_only", false);
  const std::string exclude = kv.take_string("eval.exclude_grid", "");
  const bool continuity = kv.take_bool("eval.continuity", generator == "net");
  const double continuity_step = kv.take_double("eval.continuity_step", 6.0);
  kv.finish();

  const fs::path root = need_path(data, "dataset directory (--data or VIEWGEN_DATA)");
  const fs::path out = need_path(out_text, "output directory (--out)");
  require(split_mode == "all" || split_mode == "train" || split_mode == "holdout",
          ErrorCode::kConfig, "eval.split must be all, train or holdout");
  require(!(heldout_poses && !exclude.empty()), ErrorCode::kUsage,
          "--heldout-poses-only and eval.exclude_grid are mutually exclusive");
  if (heldout_poses) opt.exclude_grid = GridSpec::training();
  if (!exclude.empty()) opt.exclude_grid = grid_from(exclude);

  const auto manifest = DatasetManifest::load(root);
  ModelRegistry registry;
  if (generator == "net") {
    require(!registry_path.empty(), ErrorCode::kUsage, "missing model registry (--registry)");
    registry = ModelRegistry::load(registry_path);
    if (classes.empty()) classes = registry.classes();
    for (const auto& c : registry.classes()) {
      require(!manifest.instances(c).empty(), ErrorCode::kConfig,
              "registry class '" + c + "' has no data in " + root.string());
      require(registry.get(c).config().input_size == manifest.size, ErrorCode::kConfig,
              "model for '" + c + "' does not match the dataset image size");
    }
  } else {
    require(generator == "oracle", ErrorCode::kConfig,
            "eval.generator must be net or oracle, got '" + generator + "'");
    require(!continuity, ErrorCode::kConfig, "continuity needs a trained model");
    if (classes.empty()) classes = manifest.classes;
  }
  for (const auto& c : classes) {
    require(!manifest.instances(c).empty(), ErrorCode::kConfig,
            "class '" + c + "' has no data in " + root.string());
  }
  prepare_output_dir(out, force);

  std::vector<ClassStats> stats;
  std::string continuity_csv = "class,instance,pitch,yaw,step,frames,max_rgb,mean_rgb,max_depth,mean_depth,closed\n";
  for (const auto& cls : classes) {
    const auto [train_seeds, holdout] = split_instances(manifest.instances(cls), holdout_fraction);
    opt.instances = split_mode == "train" ? train_seeds
                    : split_mode == "holdout" ? holdout
                                              : manifest.instances(cls);
    std::vector<PairScore> scores;
    if (generator == "net") {
      const NetGenerator gen(route(cls, registry));
      scores = evaluate_model(gen, manifest, cls, opt);
    } else {
      scores = evaluate_model(OracleGenerator(), manifest, cls, opt);
    }
    stats.push_back(class_stats(cls, scores));
    ctx.info(cls + ": " + std::to_string(scores.size()) + " images, rgb acc " +
             format_double(std::round(stats.back().acc_rgb * 100) / 100) + "%, depth acc " +
             format_double(std::round(stats.back().acc_depth * 100) / 100) + "%");
    const auto curve = rotation_curve(scores);
    write_file_atomic(out / ("rotation_" + cls + ".csv"), curve.to_csv());
    write_png(out / ("rotation_" + cls + ".png"), curve.heatmap(), 8);

    if (continuity) {
      const auto rec = manifest.records_for(cls, opt.instances.front()).front();
      const auto view = load_view(manifest, rec);
      const auto r = continuity_score(route(cls, registry), view_input(view.rgb, view.mask, manifest.size),
                                      continuity_step);
      continuity_csv += cls + "," + std::to_string(rec.instance_seed) + "," + format_double(rec.pitch) +
                        "," + format_double(rec.yaw) + "," + format_double(continuity_step) + "," +
                        std::to_string(r.rgb_steps.size() + 1) + "," + format_double(r.max_rgb) + "," +
                        format_double(r.mean_rgb) + "," + format_double(r.max_depth) + "," +
                        format_double(r.mean_depth) + "," + (r.closed ? "true" : "false") + "\n";
    }
  }
  const auto report = make_report(stats);
  write_file_atomic(out / "report.csv", report.to_csv());
  if (continuity) write_file_atomic(out / "continuity.csv", continuity_csv);

  std::string echo;
  echo += "run.data=" + root.string() + "\n";
  echo += "run.out=" + out.string() + "\n";
  echo += "run.threads=" + std::to_string(threads) + "\n";
  echo += "eval.generator=" + generator + "\n";
  if (!registry_path.empty()) echo += "eval.registry=" + registry_path + "\n";
  echo += "eval.classes=" + join(classes) + "\n";
  echo += "eval.split=" + split_mode + "\n";
  echo += "eval.holdout_fraction=" + format_double(holdout_fraction) + "\n";
  echo += "eval.inputs_per_instance=" + std::to_string(opt.inputs_per_instance) + "\n";
  echo += "eval.seed=" + std::to_string(opt.seed) + "\n";
  echo += "eval.exclude_grid=" + (opt.exclude_grid ? opt.exclude_grid->to_string() : std::string()) + "\n";
  echo += "eval.continuity=" + std::string(continuity ? "true" : "false") + "\n";
  echo += "eval.continuity_step=" + format_double(continuity_step) + "\n";
  write_file_atomic(out / "evaluate_config.txt", echo);
  ctx.output = report.to_csv();
}

void gradcheck(KeyValues& kv, Context& ctx, double& max_error_out) {
  const std::string model = kv.take_string("grad.model", "micro");
  const std::string precision = kv.take_string("grad.precision", "f64");
  const bool f64 = precision == "f64";
  const int seeds = static_cast<int>(kv.take_int("grad.seeds", 5));
  const double eps = kv.take_double("grad.eps", f64 ? 1e-5 : 1e-2);
  const double tolerance = kv.take_double("grad.tolerance", f64 ? 1e-3 : 5e-2);
  const bool network = kv.take_bool("grad.network", true);
  take_threads(kv);
  kv.finish();
  require(f64 || precision == "f32", ErrorCode::kConfig, "grad.precision must be f32 or f64");
  ViewNetConfig::preset(model);

  const auto t0 = std::chrono::steady_clock::now();
  ctx.info("checking gradients of every op" + std::string(network ? " and the " + model + " network" : "") +
           " over " + std::to_string(seeds) + " seeds");
  const auto entries = f64 ? gradient_suite<double>(model, seeds, eps, network)
                           : gradient_suite<float>(model, seeds, eps, network);
  std::map<std::string, std::pair<double, std::size_t>> per_op;
  std::vector<std::string> order;
  for (const auto& e : entries) {
    if (!per_op.count(e.name)) order.push_back(e.name);
    auto& slot = per_op[e.name];
    slot.first = std::max(slot.first, e.max_relative_error);
    slot.second += e.coordinates;
  }
  std::string text = "op,max_relative_error,coordinates\n";
  for (const auto& name : order) {
    text += name + "," + format_double(per_op[name].first) + "," + std::to_string(per_op[name].second) + "\n";
  }
  max_error_out = max_error(entries);
  text += "max_relative_error=" + format_double(max_error_out) + "\ntolerance=" + format_double(tolerance) +
          "\nprecision=" + precision + "\n";
  ctx.output = text;
  ctx.info("done in " + format_double(std::round(seconds_since(t0) * 10) / 10) + " s");
  require(max_error_out <= tolerance, ErrorCode::kVerification,
          "max relative error " + format_double(max_error_out) + " exceeds " + format_double(tolerance));
}

void info(KeyValues& kv, Context& ctx) {
  const std::string path = kv.take_string("info.checkpoint", "");
  take_threads(kv);
  kv.finish();
  const fs::path p = need_path(path, "checkpoint path");
  const auto net = load_checkpoint<float>(p);
  std::string text;
  text += "checkpoint=" + p.string() + "\n";
  text += "format_version=" + std::to_string(kCheckpointVersion) + "\n";
  text += "bytes=" + std::to_string(fs::file_size(p)) + "\n";
  text += "parameters=" + std::to_string(net.parameter_count()) + "\n";
  text += "tensors=" + std::to_string(net.parameters().size()) + "\n";
  text += "norm_layers=" + std::to_string(net.norm_state().size()) + "\n";
  text += net.config().to_text();
  if (!text.empty() && text.back() != '\n') text += "\n";
  for (const auto& [name, t] : net.parameters()) text += "tensor " + name + " " + shape_string(t.shape()) + "\n";
  ctx.output = text;
}

}  // namespace viewgen::cmd
