#include "viewgen/viewgen.h"

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <optional>
#include <string>

#include "commands.hpp"
#include "error.hpp"
#include "extractor.hpp"
#include "viewnet.hpp"

using namespace viewgen;

struct vg_model {
  std::unique_ptr<ViewNet<float>> owned;
  const ViewNet<float>* net = nullptr;
};

struct vg_registry {
  ModelRegistry registry;
  std::map<std::string, vg_model> views;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_output;

std::mutex g_log_mutex;
vg_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

template <typename F>
int guarded(F&& f) {
  try {
    f();
    g_error.clear();
    return VG_OK;
  } catch (const Error& e) {
    g_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return VG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return VG_ERR_INTERNAL;
  }
}

cmd::Context make_context() {
  cmd::Context ctx;
  ctx.log = [](int level, const std::string& message) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    if (g_log_fn) g_log_fn(level, message.c_str(), g_log_user);
  };
  return ctx;
}

template <typename Runner>
int run(const char* config, Runner&& runner) {
  g_output.clear();
  cmd::Context ctx = make_context();
  const int rc = guarded([&] {
    require(config != nullptr, ErrorCode::kInvalidArgument, "config text is NULL");
    KeyValues kv = KeyValues::parse(config);
    runner(kv, ctx);
  });
  g_output = ctx.output;
  return rc;
}

}  // namespace

extern "C" {

const char* vg_version(void) { return "0.1.0"; }

const char* vg_status_name(int status) {
  if (status < 0 || status > VG_ERR_INTERNAL) return "unknown";
  return error_code_name(static_cast<ErrorCode>(status));
}

const char* vg_last_error_message(void) { return g_error.c_str(); }

const char* vg_last_output(void) { return g_output.c_str(); }

void vg_set_log_handler(vg_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

int vg_run_render_dataset(const char* config) { return run(config, cmd::render_dataset); }
int vg_run_train(const char* config) { return run(config, cmd::train); }
int vg_run_generate(const char* config) { return run(config, cmd::generate); }
int vg_run_evaluate(const char* config) { return run(config, cmd::evaluate); }
int vg_run_info(const char* config) { return run(config, cmd::info); }

int vg_run_gradcheck(const char* config, double* max_relative_error) {
  double m = 0.0;
  const int rc = run(config, [&](KeyValues& kv, cmd::Context& ctx) { cmd::gradcheck(kv, ctx, m); });
  if (max_relative_error) *max_relative_error = m;
  return rc;
}

int vg_model_load(const char* path, vg_model** out) {
  return guarded([&] {
    require(path && out, ErrorCode::kInvalidArgument, "vg_model_load: NULL argument");
    *out = nullptr;
    auto m = std::make_unique<vg_model>();
    m->owned = std::make_unique<ViewNet<float>>(load_checkpoint<float>(path));
    m->net = m->owned.get();
    *out = m.release();
  });
}

void vg_model_free(vg_model* model) { delete model; }

int vg_model_input_size(const vg_model* model, int* size) {
  return guarded([&] {
    require(model && size, ErrorCode::kInvalidArgument, "vg_model_input_size: NULL argument");
    *size = model->net->config().input_size;
  });
}

int vg_model_save(const vg_model* model, const char* path) {
  return guarded([&] {
    require(model && path, ErrorCode::kInvalidArgument, "vg_model_save: NULL argument");
    save_checkpoint(*model->net, path);
  });
}

int vg_model_generate(const vg_model* model, const float* input, const double* delta_yaw,
                      const double* delta_pitch, size_t count, float* rgb_out, float* depth_out) {
  return guarded([&] {
    require(model && input && delta_yaw && rgb_out && depth_out, ErrorCode::kInvalidArgument,
            "vg_model_generate: NULL argument");
    require(count > 0, ErrorCode::kInvalidArgument, "vg_model_generate: count must be > 0");
    const auto s = static_cast<std::size_t>(model->net->config().input_size);
    const auto c = static_cast<std::size_t>(model->net->config().input_channels);
    std::vector<float> values(input, input + c * s * s);
    std::vector<float> batch;
    batch.reserve(count * values.size());
    std::vector<AngleQuery> queries;
    for (std::size_t i = 0; i < count; ++i) {
      batch.insert(batch.end(), values.begin(), values.end());
      queries.push_back({delta_yaw[i], delta_pitch ? delta_pitch[i] : 0.0});
    }
    const Tensor<float> x({count, c, s, s}, std::move(batch));
    const auto out = model->net->generate(x, queries);
    std::memcpy(rgb_out, out.rgb.data().data(), out.rgb.numel() * sizeof(float));
    std::memcpy(depth_out, out.depth.data().data(), out.depth.numel() * sizeof(float));
  });
}

int vg_registry_load(const char* path, vg_registry** out) {
  return guarded([&] {
    require(path && out, ErrorCode::kInvalidArgument, "vg_registry_load: NULL argument");
    *out = nullptr;
    auto r = std::make_unique<vg_registry>();
    r->registry = ModelRegistry::load(path);
    for (const auto& cls : r->registry.classes()) r->views[cls].net = &r->registry.get(cls);
    *out = r.release();
  });
}

void vg_registry_free(vg_registry* registry) { delete registry; }

size_t vg_registry_size(const vg_registry* registry) { return registry ? registry->registry.size() : 0; }

int vg_registry_route(const vg_registry* registry, const char* label, const char* override_class,
                      const vg_model** out) {
  return guarded([&] {
    require(registry && label && out, ErrorCode::kInvalidArgument, "vg_registry_route: NULL argument");
    std::optional<std::string> over;
    if (override_class) over = override_class;
    route(label, registry->registry, over);
    *out = &registry->views.at(over ? *over : std::string(label));
  });
}

}  // extern "C"
