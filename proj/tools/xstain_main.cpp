// Copyright 2026 The xstain Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// xstain: command-line driver for the cross-stain pretraining pipeline.
// Reports go to stdout as JSON; diagnostics go to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xstain/byteio.hpp"
#include "xstain/checkpoint.hpp"
#include "xstain/eval.hpp"
#include "xstain/manifest.hpp"
#include "xstain/oracles.hpp"
#include "xstain/synthetic.hpp"
#include "xstain/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Exclusive ownership of an output directory for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".xstain.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr)
      xstain::fail(xstain::ErrorKind::kIo, "output directory " + dir.string() + " is locked by another run (" +
                                               path_.string() + ")");
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) xstain::fail(xstain::ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    xstain::fail(xstain::ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

template <typename Cfg>
Cfg load_config(const std::string& path) {
  Cfg cfg;
  if (path.empty()) return cfg;
  try {
    read_json_file(path).get_to(cfg);
  } catch (const json::exception& e) {
    xstain::fail(xstain::ErrorKind::kFormat, path + ": " + e.what());
  }
  return cfg;
}

template <typename T, typename U>
void override_with(const std::optional<T>& flag, U& field) {
  if (flag) field = static_cast<U>(*flag);
}

void print(const json& j) { std::cout << j.dump() << std::endl; }

void log_err(const std::string& msg) { std::cerr << msg << std::endl; }

std::vector<xstain::NamedTensor> load_ckpt(const std::string& path) { return xstain::load_checkpoint(path); }

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string config, out;
  std::optional<std::uint32_t> n_cases, n_patches, dim_latent, dim_embed;
  std::optional<double> noise_sigma, censor_rate, case_spread;
  std::optional<std::uint64_t> seed;
  bool identity_maps = false;
};

int run_gen_synth(const SynthFlags& f) {
  auto cfg = load_config<xstain::SyntheticConfig>(f.config);
  override_with(f.n_cases, cfg.n_cases);
  override_with(f.n_patches, cfg.n_patches);
  override_with(f.dim_latent, cfg.dim_latent);
  override_with(f.dim_embed, cfg.dim_embed);
  override_with(f.noise_sigma, cfg.noise_sigma);
  override_with(f.censor_rate, cfg.censor_rate);
  override_with(f.case_spread, cfg.case_spread);
  override_with(f.seed, cfg.seed);
  if (f.identity_maps) cfg.identity_maps = true;
  xstain::validate(cfg);
  DirLock lock(f.out);
  const auto set = xstain::generate_synthetic(cfg);
  const auto manifest = xstain::write_dataset(set, f.out);
  xstain::write_file_text(fs::path(f.out) / "synthetic_config.json", json(cfg).dump(2) + "\n");
  print({{"command", "gen-synth"}, {"cases", set.size()}, {"manifest", manifest.string()}});
  return kExitOk;
}

struct ValidateFlags {
  std::string manifest;
  bool allow_he_only = false;
};

int run_validate(const ValidateFlags& f) {
  const auto set = xstain::load_manifest(f.manifest, f.allow_he_only ? std::optional<bool>(false) : std::nullopt);
  std::size_t bags = 0;
  for (const auto& c : set.cases) bags += c.bags.size();
  print({{"command", "validate"},
         {"status", "ok"},
         {"cases", set.size()},
         {"bags", bags},
         {"labels", set.labels.has_value()},
         {"survival", set.survival.has_value()}});
  return kExitOk;
}

struct TrainFlags {
  std::string manifest, config, out, adapter;
  std::optional<int> epochs, warmup_epochs, batch_cases, n_neg, heads, d_hidden, l_attn;
  std::optional<double> lr_max, lr_min, tau, weight_decay, grad_clip;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

xstain::TrainConfig train_config(const TrainFlags& f) {
  auto cfg = load_config<xstain::TrainConfig>(f.config);
  override_with(f.epochs, cfg.epochs);
  override_with(f.warmup_epochs, cfg.warmup_epochs);
  override_with(f.batch_cases, cfg.batch_cases);
  override_with(f.n_neg, cfg.n_neg);
  override_with(f.heads, cfg.heads);
  override_with(f.d_hidden, cfg.d_hidden);
  override_with(f.l_attn, cfg.l_attn);
  override_with(f.lr_max, cfg.lr_max);
  override_with(f.lr_min, cfg.lr_min);
  override_with(f.tau, cfg.tau);
  override_with(f.weight_decay, cfg.weight_decay);
  override_with(f.grad_clip, cfg.grad_clip);
  override_with(f.seed, cfg.seed);
  if (f.epochs) {
    cfg.stage1_epochs.reset();
    cfg.stage2_epochs.reset();
  }
  xstain::validate(cfg);
  return cfg;
}

// Loss log lines are written as they are produced.
xstain::TrainHooks hooks_for(std::ofstream& log, bool quiet) {
  xstain::TrainHooks h;
  if (!quiet) h.log = log_err;
  h.on_step = [&log](const xstain::LossRecord& r) { log << xstain::to_json_line(r) << '\n'; };
  return h;
}

json loss_summary(int stage, const std::vector<double>& epoch_loss, const fs::path& ckpt, const fs::path& log) {
  json j = {{"command", stage == 1 ? "train-stage1" : "train-stage2"},
            {"epochs", epoch_loss.size()},
            {"checkpoint", ckpt.string()},
            {"loss_log", log.string()}};
  if (!epoch_loss.empty()) {
    j["first_epoch_loss"] = epoch_loss.front();
    j["final_epoch_loss"] = epoch_loss.back();
  }
  return j;
}

int run_train_stage1(const TrainFlags& f) {
  const auto cfg = train_config(f);
  const auto set = xstain::load_manifest(f.manifest, true);
  DirLock lock(f.out);
  const fs::path out(f.out), log_path = out / "stage1_loss.jsonl", ckpt = out / "adapter.csck";
  xstain::write_file_text(out / "stage1_config.json", json(cfg).dump(2) + "\n");
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  const auto res = xstain::train_stage1(set, cfg, hooks_for(log, f.quiet));
  xstain::save_checkpoint(xstain::adapter_checkpoint(res.adapter), ckpt);
  print(loss_summary(1, res.epoch_loss, ckpt, log_path));
  return kExitOk;
}

int run_train_stage2(const TrainFlags& f) {
  const auto cfg = train_config(f);
  const auto set = xstain::load_manifest(f.manifest, true);
  const auto adapter = xstain::adapter_from_checkpoint(load_ckpt(f.adapter));
  DirLock lock(f.out);
  const fs::path out(f.out), log_path = out / "stage2_loss.jsonl", ckpt = out / "fusion.csck";
  xstain::write_file_text(out / "stage2_config.json", json(cfg).dump(2) + "\n");
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  const auto res = xstain::train_stage2(set, adapter, cfg, hooks_for(log, f.quiet));
  xstain::save_checkpoint(xstain::fusion_checkpoint(res.caf, res.mil), ckpt);
  print(loss_summary(2, res.epoch_loss, ckpt, log_path));
  return kExitOk;
}

struct EmbedFlags {
  std::string manifest, adapter, mil, out;
  bool mean_pool = false;
};

int run_embed(const EmbedFlags& f) {
  if (!f.mean_pool && (f.adapter.empty() || f.mil.empty()))
    xstain::fail(xstain::ErrorKind::kInvalidArgument, "embed: --adapter and --mil are required unless --mean-pool");
  const auto set = xstain::load_manifest(f.manifest, false);
  std::vector<xstain::SlideEmbedding> emb;
  if (f.mean_pool) {
    emb = xstain::mean_pool_cases(set);
  } else {
    const auto adapter = xstain::adapter_from_checkpoint(load_ckpt(f.adapter));
    const auto mil = xstain::mil_from_checkpoint(load_ckpt(f.mil));
    emb = xstain::embed_cases(set, adapter, mil);
  }
  DirLock lock(f.out);
  const auto manifest = xstain::write_dataset(xstain::embeddings_as_cases(set, emb), f.out, false);
  print({{"command", "embed"},
         {"cases", emb.size()},
         {"mode", f.mean_pool ? "mean_pool" : "he_only"},
         {"manifest", manifest.string()}});
  return kExitOk;
}

struct KshotFlags {
  std::string embeddings;
  int k = 10;
  std::vector<std::uint64_t> seeds;
  bool standardize = false;
};

int run_eval_kshot(const KshotFlags& f) {
  const auto table = xstain::table_from_cases(xstain::load_manifest(f.embeddings, false));
  if (!table.labels) xstain::fail(xstain::ErrorKind::kInvalidArgument, f.embeddings + ": manifest has no labels");
  xstain::ProbeOptions opts;
  opts.standardize = f.standardize;
  const auto seeds = f.seeds.empty() ? xstain::default_seeds(10) : f.seeds;
  print(to_json(xstain::kshot_probe(table.x, *table.labels, f.k, seeds, opts)));
  return kExitOk;
}

struct SurvivalFlags {
  std::string embeddings;
  int folds = 5;
  std::uint64_t seed = 0;
  bool standardize = false;
};

int run_eval_survival(const SurvivalFlags& f) {
  const auto table = xstain::table_from_cases(xstain::load_manifest(f.embeddings, false));
  if (!table.survival)
    xstain::fail(xstain::ErrorKind::kInvalidArgument, f.embeddings + ": manifest has no survival annotations");
  xstain::CoxOptions opts;
  opts.standardize = f.standardize;
  print(to_json(xstain::survival_cv(table.x, *table.survival, f.folds, f.seed, opts)));
  return kExitOk;
}

struct RetrievalFlags {
  std::string manifest, adapter, fusion;
};

int run_retrieval(const RetrievalFlags& f) {
  const auto set = xstain::load_manifest(f.manifest, true);
  std::optional<xstain::AdapterParams<float>> adapter;
  std::optional<xstain::CafParams<float>> caf;
  std::optional<xstain::MilParams<float>> mil;
  if (!f.adapter.empty()) adapter = xstain::adapter_from_checkpoint(load_ckpt(f.adapter));
  if (!f.fusion.empty()) {
    const auto t = load_ckpt(f.fusion);
    caf = xstain::caf_from_checkpoint(t);
    mil = xstain::mil_from_checkpoint(t);
  }
  const auto rep = xstain::retrieval_diagnostics(set, adapter ? &*adapter : nullptr, mil ? &*mil : nullptr,
                                                 caf ? &*caf : nullptr);
  print(to_json(rep));
  return kExitOk;
}

struct GradcheckFlags {
  int trials = 20;
  std::uint64_t seed = 0;
  double eps = 1e-4;
};

int run_gradcheck(const GradcheckFlags& f) {
  bool ok = true;
  json suites = json::array();
  for (const auto& r : xstain::run_all_gradchecks(f.trials, f.seed, f.eps)) {
    ok = ok && r.passed();
    suites.push_back(to_json(r));
    if (!r.passed())
      log_err("gradcheck: suite '" + r.name + "' failed in tensor '" + r.worst.worst_tensor +
              "' (max relative error " + std::to_string(r.worst.max_rel_error) + ")");
  }
  print({{"command", "gradcheck"}, {"passed", ok}, {"suites", suites}});
  return ok ? kExitOk : kExitFailure;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool stage2) {
  cmd->add_option("--manifest", f.manifest, "Training manifest JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", f.config, "TrainConfig JSON; flags below override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory for checkpoint, loss log and resolved config")->required();
  if (stage2)
    cmd->add_option("--adapter", f.adapter, "Stage-1 adapter checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--epochs", f.epochs, "Epochs (clears per-stage overrides from the config)");
  cmd->add_option("--warmup-epochs", f.warmup_epochs, "Linear warmup epochs");
  cmd->add_option("--batch-cases", f.batch_cases, "Cases per mini-batch");
  cmd->add_option("--n-neg", f.n_neg, "Negatives per anchor in the patch loss");
  cmd->add_option("--heads", f.heads, "Fusion attention heads");
  cmd->add_option("--d-hidden", f.d_hidden, "Adapter hidden width");
  cmd->add_option("--l-attn", f.l_attn, "MIL attention width");
  cmd->add_option("--lr-max", f.lr_max, "Peak learning rate");
  cmd->add_option("--lr-min", f.lr_min, "Final learning rate");
  cmd->add_option("--tau", f.tau, "Contrastive temperature");
  cmd->add_option("--weight-decay", f.weight_decay, "AdamW decoupled weight decay");
  cmd->add_option("--grad-clip", f.grad_clip, "Global gradient-norm clip (<= 0 disables)");
  cmd->add_option("--seed", f.seed, "Seed for initialization, shuffling and negative sampling");
  cmd->add_flag("--quiet", f.quiet, "Suppress per-epoch diagnostics");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xstain: cross-stain contrastive pretraining for multi-stain patch-embedding bags"};
  app.require_subcommand(1, 1);

  SynthFlags synth;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic aligned multi-stain dataset");
  gen->add_option("--config", synth.config, "SyntheticConfig JSON; flags below override its values")
      ->check(CLI::ExistingFile);
  gen->add_option("--out", synth.out, "Output directory (bags/ and manifest.json)")->required();
  gen->add_option("--n-cases", synth.n_cases, "Number of cases");
  gen->add_option("--n-patches", synth.n_patches, "Patches per bag");
  gen->add_option("--dim-latent", synth.dim_latent, "Latent dimension");
  gen->add_option("--dim-embed", synth.dim_embed, "Embedding dimension");
  gen->add_option("--noise-sigma", synth.noise_sigma, "Per-stain observation noise");
  gen->add_option("--censor-rate", synth.censor_rate, "Fraction of censored survival times");
  gen->add_option("--case-spread", synth.case_spread, "Scale of the per-case latent offset");
  gen->add_option("--seed", synth.seed, "Generator seed");
  gen->add_flag("--identity-maps", synth.identity_maps, "Debug: identity stain maps");

  ValidateFlags val;
  auto* vcmd = app.add_subcommand("validate", "Load a manifest and check all alignment invariants");
  vcmd->add_option("--manifest", val.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  vcmd->add_flag("--allow-he-only", val.allow_he_only, "Accept cases without IHC bags");

  TrainFlags t1, t2;
  auto* s1 = app.add_subcommand("train-stage1", "Train the H&E adapter with the patch alignment loss");
  add_train_flags(s1, t1, false);
  auto* s2 = app.add_subcommand("train-stage2", "Train fusion and MIL with the slide alignment loss");
  add_train_flags(s2, t2, true);

  EmbedFlags emb;
  auto* ecmd = app.add_subcommand("embed", "Write H&E-only slide embeddings as single-row bags");
  ecmd->add_option("--manifest", emb.manifest, "Manifest JSON (IHC bags optional)")->required()->check(CLI::ExistingFile);
  ecmd->add_option("--adapter", emb.adapter, "Stage-1 adapter checkpoint")->check(CLI::ExistingFile);
  ecmd->add_option("--mil", emb.mil, "Stage-2 checkpoint holding the MIL tensors")->check(CLI::ExistingFile);
  ecmd->add_option("--out", emb.out, "Output directory")->required();
  ecmd->add_flag("--mean-pool", emb.mean_pool, "Baseline: mean of raw H&E rows, no checkpoints");

  KshotFlags ks;
  auto* kcmd = app.add_subcommand("eval-kshot", "k-shot logistic probe, AUC report");
  kcmd->add_option("--embeddings", ks.embeddings, "Embedding manifest written by embed")->required()->check(CLI::ExistingFile);
  kcmd->add_option("--k", ks.k, "Training cases per class")->check(CLI::PositiveNumber);
  kcmd->add_option("--seeds", ks.seeds, "Probe seeds (default 0..9)");
  kcmd->add_flag("--standardize", ks.standardize, "z-score features with training-split statistics");

  SurvivalFlags sv;
  auto* scmd = app.add_subcommand("eval-survival", "Cross-validated Cox model, C-index report");
  scmd->add_option("--embeddings", sv.embeddings, "Embedding manifest written by embed")->required()->check(CLI::ExistingFile);
  scmd->add_option("--folds", sv.folds, "Number of folds (>= 2)");
  scmd->add_option("--seed", sv.seed, "Fold assignment seed");
  scmd->add_flag("--standardize", sv.standardize, "z-score features with training-fold statistics");

  RetrievalFlags rt;
  auto* rcmd = app.add_subcommand("retrieval", "Patch- and slide-level cross-stain retrieval diagnostics");
  rcmd->add_option("--manifest", rt.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  rcmd->add_option("--adapter", rt.adapter, "Adapter checkpoint (raw H&E when omitted)")->check(CLI::ExistingFile);
  rcmd->add_option("--fusion", rt.fusion, "Stage-2 checkpoint for slide-level retrieval")->check(CLI::ExistingFile);

  GradcheckFlags gc;
  auto* gcmd = app.add_subcommand("gradcheck", "Finite-difference gradient suites (exit 1 on failure)");
  gcmd->add_option("--trials", gc.trials, "Random shapes per suite")->check(CLI::PositiveNumber);
  gcmd->add_option("--seed", gc.seed, "Base seed");
  gcmd->add_option("--eps", gc.eps, "Central-difference step")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return run_gen_synth(synth);
    if (*vcmd) return run_validate(val);
    if (*s1) return run_train_stage1(t1);
    if (*s2) return run_train_stage2(t2);
    if (*ecmd) return run_embed(emb);
    if (*kcmd) return run_eval_kshot(ks);
    if (*scmd) return run_eval_survival(sv);
    if (*rcmd) return run_retrieval(rt);
    if (*gcmd) return run_gradcheck(gc);
  } catch (const std::exception& e) {
    log_err(std::string("xstain: ") + e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
