#pragma once

#include <functional>
#include <string>

#include "key_values.hpp"

namespace viewgen::cmd {

struct Context {
  std::function<void(int level, const std::string& message)> log;
  // Human-readable result; kept even when the command fails part way.
  std::string output;

  void info(const std::string& message) const {
    if (log) log(0, message);
  }
};

// Each runner consumes its keys from `kv` and rejects leftovers with
// ErrorCode::kUsage before doing any work.
void render_dataset(KeyValues& kv, Context& ctx);
void train(KeyValues& kv, Context& ctx);
void generate(KeyValues& kv, Context& ctx);
void evaluate(KeyValues& kv, Context& ctx);
// Sets `max_error`; kVerification when it exceeds grad.tolerance.
void gradcheck(KeyValues& kv, Context& ctx, double& max_error);
void info(KeyValues& kv, Context& ctx);

}  // namespace viewgen::cmd
