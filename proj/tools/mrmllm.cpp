// Copyright 2026 The mrmllm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: gen-data, train, eval, infer, gradcheck, config.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mrmllm/mrmllm.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code(mrml_status s) {
  if (s == MRML_OK) return 0;
  return s == MRML_ERROR_RUNTIME ? kExitRuntime : kExitUsage;
}

int report(mrml_status s) {
  if (s != MRML_OK) std::fprintf(stderr, "error: %s\n", mrml_last_error());
  return exit_code(s);
}

struct StringOut {
  char* p = nullptr;
  ~StringOut() { mrml_string_free(p); }
  const char* c_str() const { return p ? p : ""; }
};

using ConfigPtr = std::unique_ptr<mrml_config, decltype(&mrml_config_free)>;
using ModelPtr = std::unique_ptr<mrml_model, decltype(&mrml_model_free)>;

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", path, "run configuration file (key = value lines)");
    cmd->add_option("--set", overrides, "override one configuration key, key=value (repeatable)")
        ->capture_default_str()
        ->default_str("");
  }

  // Defaults, then the file, then --set overrides in order.
  mrml_status build(ConfigPtr& out) const {
    mrml_config* raw = nullptr;
    const auto s = path.empty() ? mrml_config_new(&raw) : mrml_config_load(path.c_str(), &raw);
    if (s != MRML_OK) return s;
    out.reset(raw);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
        return MRML_ERROR_INVALID_ARGUMENT;
      }
      const auto st = mrml_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
      if (st != MRML_OK) return st;
    }
    return MRML_OK;
  }
};

// Prints errors raised before the C API had a chance to set a message.
int config_failure(mrml_status s) {
  if (s != MRML_OK && *mrml_last_error()) std::fprintf(stderr, "error: %s\n", mrml_last_error());
  return exit_code(s);
}

void print_progress(size_t step, double loss, void* user) {
  const auto every = *static_cast<std::size_t*>(user);
  if (every > 0 && step % every == 0) std::fprintf(stderr, "step %zu loss %.6f\n", step, loss);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal perception-language model toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", mrml_version());

  ConfigFlags gen_cfg;
  std::size_t gen_n = 100;
  std::uint64_t gen_seed = 7;
  double gen_noise = 0.08;
  std::string gen_out = "data.json";
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic instruction dataset");
  gen->add_option("--n", gen_n, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--noise", gen_noise, "box corner noise amplitude")->check(CLI::Range(0.0, 0.5));
  gen->add_option("--out", gen_out, "training split path; held-out split goes to <stem>.heldout.json");
  gen_cfg.add_to(gen);

  ConfigFlags train_cfg;
  std::string train_data, train_out = "model.ckpt";
  std::size_t log_every = 50;
  auto* trn = app.add_subcommand("train", "train the adapters, fusion and encoders");
  trn->add_option("--data", train_data, "dataset file")->required();
  trn->add_option("--out", train_out, "checkpoint path (sidecars use it as prefix)");
  trn->add_option("--log-every", log_every, "progress interval in steps, 0 = silent");
  train_cfg.add_to(trn);

  std::string eval_ckpt, eval_data, eval_task = "refine", eval_format = "json";
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
  evl->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  evl->add_option("--data", eval_data, "dataset file")->required();
  evl->add_option("--task", eval_task, "refine or vqa_yesno")
      ->check(CLI::IsMember({"refine", "vqa_yesno"}));
  evl->add_option("--format", eval_format, "json or table")->check(CLI::IsMember({"json", "table"}));

  std::string inf_ckpt, inf_dets, inf_question, inf_image;
  auto* inf = app.add_subcommand("infer", "answer a question about one image");
  inf->add_option("--checkpoint", inf_ckpt, "checkpoint path")->required();
  inf->add_option("--detections", inf_dets, "detections file")->required();
  inf->add_option("--question", inf_question, "question text")->required();
  inf->add_option("--image-id", inf_image, "image to use; default is the first in the file");

  std::size_t gc_seeds = 10;
  auto* gck = app.add_subcommand("gradcheck", "check every gradient against central differences");
  gck->add_option("--seeds", gc_seeds, "seeds per check")->check(CLI::PositiveNumber);

  ConfigFlags show_cfg;
  auto* cfg = app.add_subcommand("config", "print every configuration key with its default, "
                                           "or the resolved values with --config/--set");
  show_cfg.add_to(cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*gen) {
    ConfigPtr c(nullptr, mrml_config_free);
    if (auto s = gen_cfg.build(c); s != MRML_OK) return config_failure(s);
    StringOut summary;
    const auto s = mrml_gen_data(c.get(), gen_n, gen_seed, gen_noise, gen_out.c_str(), &summary.p);
    if (s == MRML_OK) std::printf("%s\n", summary.c_str());
    return report(s);
  }
  if (*trn) {
    ConfigPtr c(nullptr, mrml_config_free);
    if (auto s = train_cfg.build(c); s != MRML_OK) return config_failure(s);
    double final_loss = 0.0;
    const auto s = mrml_train(c.get(), train_data.c_str(), train_out.c_str(), print_progress,
                              &log_every, &final_loss);
    if (s == MRML_OK) std::printf("final loss %.6f, checkpoint %s\n", final_loss, train_out.c_str());
    return report(s);
  }
  if (*evl) {
    mrml_model* raw = nullptr;
    if (auto s = mrml_model_load(eval_ckpt.c_str(), &raw); s != MRML_OK) return report(s);
    ModelPtr model(raw, mrml_model_free);
    StringOut json, table;
    const auto s = mrml_evaluate(model.get(), eval_data.c_str(), eval_task.c_str(), &json.p, &table.p);
    if (s == MRML_OK) std::printf("%s\n", eval_format == "json" ? json.c_str() : table.c_str());
    return report(s);
  }
  if (*inf) {
    mrml_model* raw = nullptr;
    if (auto s = mrml_model_load(inf_ckpt.c_str(), &raw); s != MRML_OK) return report(s);
    ModelPtr model(raw, mrml_model_free);
    StringOut text;
    const auto s = mrml_infer(model.get(), inf_dets.c_str(), inf_image.c_str(), inf_question.c_str(),
                              &text.p);
    if (s == MRML_OK) std::printf("%s\n", text.c_str());
    return report(s);
  }
  if (*gck) {
    int passed = 0;
    double worst = 0.0;
    StringOut table;
    const auto s = mrml_gradcheck(gc_seeds, &passed, &worst, &table.p);
    if (s != MRML_OK) return report(s);
    std::printf("%s", table.c_str());
    return passed ? 0 : kExitRuntime;
  }
  if (*cfg) {
    StringOut text;
    mrml_status s;
    if (show_cfg.path.empty() && show_cfg.overrides.empty()) {
      s = mrml_config_describe(&text.p);
    } else {
      ConfigPtr c(nullptr, mrml_config_free);
      if (s = show_cfg.build(c); s != MRML_OK) return config_failure(s);
      s = mrml_config_to_text(c.get(), &text.p);
    }
    if (s == MRML_OK) std::printf("%s", text.c_str());
    return report(s);
  }
  return kExitUsage;
}
