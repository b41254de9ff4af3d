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


#include "mrmllm/mrmllm.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <new>
#include <sstream>
#include <string>

#include "mrmllm/error.hpp"
#include "mrmllm/evaluation.hpp"
#include "mrmllm/gradcheck_suite.hpp"
#include "mrmllm/run_config.hpp"
#include "mrmllm/training.hpp"

struct mrml_config {
  mrml::RunConfig value;
};

struct mrml_model {
  mrml::RunConfig config;
  mrml::tok::Vocab vocab;
  mrml::Model model;
};

namespace {

thread_local std::string g_last_error;

mrml_status fail(mrml_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
mrml_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MRML_OK;
  } catch (const mrml::Error& e) {
    return fail(static_cast<mrml_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MRML_ERROR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(MRML_ERROR_RUNTIME, e.what());
  }
}

char* duplicate(const std::string& s) {
  auto* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw mrml::InvalidArgument(std::string(what) + " must not be null");
}

std::string sidecar(const std::string& checkpoint, const char* suffix) { return checkpoint + suffix; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw mrml::IoError("cannot write " + path);
}

std::string loss_csv(const std::vector<mrml::LossRecord>& log) {
  std::ostringstream os;
  os << "step,loss\n" << std::setprecision(17);
  for (const auto& r : log) os << r.step << ',' << r.loss << '\n';
  return os.str();
}

std::vector<mrml::InstructionSample> samples_for_task(const mrml_model& m, const char* data_path,
                                                      mrml::TaskTag task) {
  const auto all = mrml::load_samples(data_path, m.config.class_table(), m.config.train.model.d_p);
  std::vector<mrml::InstructionSample> out;
  for (const auto& s : all) {
    if (s.task_tag == task) out.push_back(s);
  }
  if (out.empty()) {
    throw mrml::InvalidArgument(std::string(data_path) + " has no " + mrml::to_string(task) +
                                " samples");
  }
  return out;
}

}  // namespace

extern "C" {

const char* mrml_version(void) { return "0.1.0"; }

const char* mrml_last_error(void) { return g_last_error.c_str(); }

void mrml_string_free(char* s) { delete[] s; }

mrml_status mrml_config_new(mrml_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new mrml_config{};
  });
}

mrml_status mrml_config_load(const char* path, mrml_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = mrml::RunConfig::load(path);
    cfg.validate();
    *out = new mrml_config{std::move(cfg)};
  });
}

mrml_status mrml_config_set(mrml_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->value.set(key, value);
  });
}

mrml_status mrml_config_get(const mrml_config* cfg, const char* key, char** value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    *value = duplicate(cfg->value.get(key));
  });
}

mrml_status mrml_config_to_text(const mrml_config* cfg, char** text) {
  return guarded([&] {
    require(cfg, "cfg");
    require(text, "text");
    *text = duplicate(cfg->value.to_text());
  });
}

mrml_status mrml_config_describe(char** text) {
  return guarded([&] {
    require(text, "text");
    std::string out;
    for (const auto& k : mrml::RunConfig::keys()) {
      out += "# " + k.help + "\n" + k.name + " = " + k.default_value + "\n";
    }
    *text = duplicate(out);
  });
}

void mrml_config_free(mrml_config* cfg) { delete cfg; }

mrml_status mrml_gen_data(const mrml_config* cfg, size_t n, uint64_t seed, double noise,
                          const char* out_path, char** summary) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_path, "out_path");
    cfg->value.validate();
    const auto data = mrml::make_dataset(n, seed, noise, cfg->value.dataset_config());
    mrml::save_samples(out_path, data.train);
    mrml::save_samples(mrml::heldout_path(out_path), data.heldout);
    std::size_t refine = 0, yesno = 0;
    for (const auto* split : {&data.train, &data.heldout}) {
      for (const auto& s : *split) {
        refine += s.task_tag == mrml::TaskTag::kRefine;
        yesno += s.task_tag == mrml::TaskTag::kVqaYesNo;
      }
    }
    if (summary) {
      *summary = duplicate("refine: " + std::to_string(refine) + ", yesno: " + std::to_string(yesno));
    }
  });
}

mrml_status mrml_train(const mrml_config* cfg, const char* data_path, const char* out_path,
                       mrml_progress_fn progress, void* user, double* final_loss) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data_path, "data_path");
    require(out_path, "out_path");
    const auto& rc = cfg->value;
    rc.validate();
    const auto data = mrml::load_samples(data_path, rc.class_table(), rc.train.model.d_p);
    auto tc = rc.train;
    tc.model = rc.model_config();
    auto result = mrml::train(tc, data, [&](const mrml::LossRecord& r) {
      if (progress) progress(r.step, r.loss, user);
    });
    const std::string out = out_path;
    mrml::save_checkpoint(out, mrml::make_checkpoint(result.model, result.steps_run));
    write_text(sidecar(out, ".config"), rc.to_text());
    result.vocab.save(sidecar(out, ".vocab.txt"));
    write_text(sidecar(out, ".loss.csv"), loss_csv(result.log));
    const double last = result.log.empty() ? 0.0 : result.log.back().loss;
    if (final_loss) *final_loss = last;
    if (!std::isfinite(last)) throw mrml::RuntimeError("final training loss is not finite");
  });
}

mrml_status mrml_model_load(const char* checkpoint_path, mrml_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    const std::string path = checkpoint_path;
    auto config = mrml::RunConfig::load(sidecar(path, ".config"));
    config.validate();
    auto vocab = mrml::tok::Vocab::load(sidecar(path, ".vocab.txt"));
    auto mc = config.model_config();
    mc.vocab_size = vocab.size();
    const auto ckpt = mrml::load_checkpoint(path);
    auto model = mrml::Model::make(mc, config.train.seed);
    mrml::apply_checkpoint(ckpt, model);
    *out = new mrml_model{std::move(config), std::move(vocab), std::move(model)};
  });
}

void mrml_model_free(mrml_model* model) { delete model; }

mrml_status mrml_evaluate(const mrml_model* model, const char* data_path, const char* task,
                          char** report_json, char** report_table) {
  return guarded([&] {
    require(model, "model");
    require(data_path, "data_path");
    require(task, "task");
    const auto tag = mrml::task_tag_from_string(task);
    if (tag == mrml::TaskTag::kCaptionToy) {
      throw mrml::InvalidArgument("evaluation supports refine and vqa_yesno, not caption_toy");
    }
    const auto samples = samples_for_task(*model, data_path, tag);
    const auto& toggles = model->config.train.toggles;
    const auto outputs = mrml::generate_answers(model->model, model->vocab, samples, toggles,
                                                model->config.max_new_tokens);
    auto report = tag == mrml::TaskTag::kRefine ? mrml::refinement_report(samples, outputs)
                                                : mrml::yesno_report(samples, outputs);
    report.config = {{"data", data_path},
                     {"seed", model->config.get("seed")},
                     {"visual_forward", model->config.get("visual_forward")},
                     {"perception_forward", model->config.get("perception_forward")},
                     {"max_new_tokens", model->config.get("max_new_tokens")}};
    if (report_json) *report_json = duplicate(report.to_json());
    if (report_table) *report_table = duplicate(report.to_table());
  });
}

mrml_status mrml_infer(const mrml_model* model, const char* detections_path, const char* image_id,
                       const char* question, char** text) {
  return guarded([&] {
    require(model, "model");
    require(detections_path, "detections_path");
    require(question, "question");
    require(text, "text");
    const auto& cfg = model->config;
    const auto sets =
        mrml::perception::load_detections(detections_path, cfg.class_table(), cfg.train.model.d_p);
    if (sets.empty()) throw mrml::InvalidArgument(std::string(detections_path) + " has no images");
    const mrml::perception::DetectionSet* chosen = &sets.front();
    if (image_id && *image_id) {
      chosen = nullptr;
      for (const auto& s : sets) {
        if (s.image_id == image_id) chosen = &s;
      }
      if (!chosen) {
        throw mrml::InvalidArgument("image '" + std::string(image_id) + "' not in " + detections_path);
      }
    }
    *text = duplicate(mrml::generate_answer(model->model, model->vocab, chosen->image_id, *chosen,
                                            question, cfg.train.toggles, cfg.max_new_tokens));
  });
}

mrml_status mrml_gradcheck(size_t seeds, int* passed, double* worst, char** report) {
  return guarded([&] {
    if (seeds == 0) throw mrml::InvalidArgument("gradcheck needs at least one seed");
    const auto r = mrml::run_grad_suite(seeds);
    if (passed) *passed = r.passed() ? 1 : 0;
    if (worst) *worst = r.worst();
    if (report) *report = duplicate(r.to_table());
  });
}

}  // extern "C"
