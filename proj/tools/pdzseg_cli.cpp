// pdzseg command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pdzseg/checkpoint.hpp"
#include "pdzseg/config.hpp"
#include "pdzseg/corruptions.hpp"
#include "pdzseg/data.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/hash.hpp"
#include "pdzseg/pipeline.hpp"
#include "pdzseg/service.hpp"
#include "pdzseg/synth.hpp"

namespace {

using namespace pdzseg;
using nlohmann::json;

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct ConfigOptions {
  std::string config_path;
  std::string preset = "paper";
  std::optional<std::string> manifest;
  std::optional<std::string> output_dir;
  std::optional<std::string> init_checkpoint;
  std::optional<int> image_size;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> init_seed;
  std::optional<int> max_steps;
  std::optional<std::string> mix;
  std::optional<std::string> mix_prompt;
  std::optional<double> prompted_fraction;
  std::optional<int> lora_rank;
  std::optional<double> lora_alpha;
  bool no_lora = false;
  std::optional<std::string> fuse_resolution;
  bool dry_run = false;
};

void add_config_options(CLI::App* app, ConfigOptions& o) {
  app->add_option("--config", o.config_path, "JSON experiment config; flags override it")->check(CLI::ExistingFile);
  app->add_option("--preset", o.preset, "base configuration")->check(CLI::IsMember({"paper", "desk"}));
  app->add_option("--manifest", o.manifest, "dataset manifest");
  app->add_option("--output-dir", o.output_dir, "run output directory");
  app->add_option("--init-checkpoint", o.init_checkpoint, "pretrained base weights");
  app->add_option("--image-size", o.image_size, "model input side in pixels");
  app->add_option("--epochs", o.epochs);
  app->add_option("--batch-size", o.batch_size);
  app->add_option("--lr", o.learning_rate, "base learning rate");
  app->add_option("--seed", o.seed, "training / prompt seed");
  app->add_option("--init-seed", o.init_seed, "weight initialisation seed");
  app->add_option("--max-steps", o.max_steps, "fixed number of optimizer steps");
  app->add_option("--mix", o.mix, "single_prompt | prompt_vs_none_ratio | four_way_mix");
  app->add_option("--mix-prompt", o.mix_prompt, "prompt kind used by the mix");
  app->add_option("--prompted-fraction", o.prompted_fraction);
  app->add_option("--lora-rank", o.lora_rank);
  app->add_option("--lora-alpha", o.lora_alpha);
  app->add_flag("--no-lora", o.no_lora, "train without adapters (encoder frozen)");
  app->add_option("--fuse-resolution", o.fuse_resolution, "input_resolution | quarter_then_upsample");
  app->add_flag("--dry-run", o.dry_run, "validate inputs and print the plan only");
}

ExperimentConfig resolve_config(const ConfigOptions& o) {
  ExperimentConfig cfg = preset_by_name(o.preset);
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kInvalidConfig, o.config_path + ": " + e.what());
    }
    cfg = experiment_from_json(doc, cfg);
  }
  if (o.manifest) cfg.paths.manifest = *o.manifest;
  if (o.output_dir) cfg.paths.output_dir = *o.output_dir;
  if (o.init_checkpoint) cfg.paths.init_checkpoint = *o.init_checkpoint;
  if (o.image_size) cfg.model.encoder.image_size = *o.image_size;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.init_seed) cfg.init_seed = *o.init_seed;
  if (o.max_steps) cfg.train.max_steps = *o.max_steps;
  if (o.mix) {
    const MixRegime r = parse_mix_regime(*o.mix);
    if (r == MixRegime::kFourWayMix && cfg.mix.regime != MixRegime::kFourWayMix) cfg.mix = MixSpec::four_way();
    cfg.mix.regime = r;
    if (r != MixRegime::kFourWayMix && !cfg.mix.prompt_kind) cfg.mix.prompt_kind = PromptKind::kLongScribble;
  }
  if (o.mix_prompt) cfg.mix.prompt_kind = parse_prompt_kind(*o.mix_prompt);
  if (o.prompted_fraction) cfg.mix.prompted_fraction = *o.prompted_fraction;
  if (o.no_lora) cfg.model.lora.reset();
  if (o.lora_rank || o.lora_alpha) {
    if (!cfg.model.lora) cfg.model.lora = LoRAConfig{};
    if (o.lora_rank) {
      cfg.model.lora->rank = *o.lora_rank;
      if (!o.lora_alpha) cfg.model.lora->alpha = *o.lora_rank;
    }
    if (o.lora_alpha) cfg.model.lora->alpha = *o.lora_alpha;
  }
  if (o.fuse_resolution) {
    cfg.model.decoder = decoder_config_from_json(json{{"fuse_resolution", *o.fuse_resolution}}, cfg.model.decoder);
  }
  cfg.validate();
  return cfg;
}

void echo_config(const ExperimentConfig& cfg) {
  std::cout << "config_hash: " << config_hash(cfg) << '\n' << to_json(cfg).dump(2) << '\n';
}

void print_plan(const json& plan) { std::cout << "dry run plan:\n" << plan.dump(2) << '\n'; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetManifest load_manifest(const ExperimentConfig& cfg) {
  if (cfg.paths.manifest.empty()) throw Error(ErrorKind::kInvalidConfig, "no manifest given (--manifest)");
  return parse_manifest(cfg.paths.manifest);
}

// ---- subcommands -----------------------------------------------------------

struct SynthOptions {
  std::string out;
  SynthConfig cfg;
};

int run_synth(const SynthOptions& s, const ConfigOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  echo_config(cfg);
  SynthConfig sc = s.cfg;
  if (o.dry_run) {
    sc.validate();
    print_plan({{"subcommand", "synth-data"},
                {"out", s.out},
                {"image_size", sc.image_size},
                {"frames", (sc.train_videos + sc.test_videos) * sc.frames_per_video}});
    return 0;
  }
  const DatasetManifest m = write_synthetic_dataset(s.out, sc);
  std::cout << "wrote " << m.samples.size() << " samples to " << s.out << "/manifest.json\n";
  return 0;
}

struct PromptOptions {
  std::string split = "train";
  std::string kind = "long_scribble";
  std::string out;
};

int run_gen_prompts(const PromptOptions& p, const ConfigOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  echo_config(cfg);
  const PromptKind kind = parse_prompt_kind(p.kind);
  const DatasetManifest manifest = load_manifest(cfg);
  const auto records = manifest.samples_in_split(p.split);
  const int size = cfg.model.encoder.image_size;
  if (o.dry_run) {
    print_plan({{"subcommand", "gen-prompts"}, {"split", p.split}, {"kind", p.kind}, {"samples", records.size()},
                {"image_size", size}, {"out", p.out}});
    return 0;
  }
  std::filesystem::create_directories(p.out);
  json index = json::array();
  // Prompts are in native frame coordinates, as a client would send them.
  for (const auto& rec : records) {
    LoadedPair pair = load_native_pair(rec);
    json entry = {{"sample_id", rec.sample_id}};
    if (kind == PromptKind::kNone || pair.mask.count(1) == 0) {
      entry["prompt"] = prompt_to_json(no_prompt(pair.mask.height(), pair.mask.width()));
    } else {
      const VisualPrompt prompt = generate_prompt(kind, pair.mask, mix_seed(cfg.train.seed, fnv1a64(rec.sample_id)));
      entry["prompt"] = prompt_to_json(prompt);
      write_png_rgb(std::filesystem::path(p.out) / (rec.sample_id + "_overlay.png"),
                    render_prompt_overlay(pair.image, prompt));
    }
    index.push_back(std::move(entry));
  }
  std::ofstream(std::filesystem::path(p.out) / "prompts.json") << index.dump(2) << '\n';
  std::cout << "wrote " << index.size() << " prompts to " << p.out << '\n';
  return 0;
}

int run_train(const ConfigOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  echo_config(cfg);
  const DatasetManifest manifest = load_manifest(cfg);
  const auto mixed = build_mixed_dataset(manifest, cfg.mix, cfg.train.seed, "train");
  const int steps = total_steps(cfg.train, mixed.size());
  if (o.dry_run) {
    json counts = json::object();
    for (const auto& [k, n] : count_kinds(mixed)) counts[std::string(to_string(k))] = n;
    print_plan({{"subcommand", "train"}, {"train_samples", mixed.size()}, {"total_steps", steps},
                {"mix_counts", counts}, {"output_dir", cfg.paths.output_dir}});
    return 0;
  }
  const int every = std::max(1, steps / 20);
  const TrainingOutcome out = run_training(manifest, cfg, [&](const StepEvent& e) {
    if (e.step % every == 0 || e.step == e.total) {
      std::printf("step %d/%d epoch %d loss %.5f lr %.6g\n", e.step, e.total, e.epoch, e.loss, e.lr);
      std::fflush(stdout);
    }
  });
  std::cout << "final checkpoint: " << out.final_checkpoint.string() << '\n';
  if (out.best_checkpoint) std::cout << "best checkpoint: " << out.best_checkpoint->string() << '\n';
  std::cout << "run report: " << out.report_path.string() << '\n';
  return 0;
}

struct EvalCliOptions {
  std::string ckpt;
  std::string split = "test";
  std::string prompt = "none";
  std::optional<std::string> corruption;
  int severity = 3;
  std::uint64_t corruption_seed = 0;
  std::optional<std::string> out;
};

int run_eval_cmd(const EvalCliOptions& e, const ConfigOptions& o) {
  ExperimentConfig cfg = resolve_config(o);
  const CheckpointMeta meta = read_checkpoint_meta(e.ckpt);
  cfg.model = meta.model;
  cfg.init_seed = meta.init_seed;
  echo_config(cfg);
  const DatasetManifest manifest = load_manifest(cfg);
  EvalOptions opts;
  opts.split = e.split;
  opts.prompt_kind = parse_prompt_kind(e.prompt);
  opts.seed = cfg.train.seed;
  if (e.corruption) opts.corruption = CorruptionSpec{parse_corruption_kind(*e.corruption), e.severity, e.corruption_seed};
  if (opts.corruption && (e.severity < 1 || e.severity > 5)) {
    throw Error(ErrorKind::kBadSeverity, "severity " + std::to_string(e.severity) + " outside 1..5");
  }
  if (o.dry_run) {
    print_plan({{"subcommand", "eval"}, {"checkpoint", e.ckpt}, {"split", e.split}, {"prompt", e.prompt},
                {"samples", manifest.samples_in_split(e.split).size()}});
    return 0;
  }
  const SegModel<float> model = load_checkpoint(e.ckpt);
  const MetricsReport report = run_eval(model, manifest, opts);
  std::cout << render_table({report});
  if (e.out) {
    std::filesystem::path p(*e.out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << report_to_json(report).dump(2) << '\n';
    std::cout << "metrics report: " << *e.out << '\n';
  }
  return 0;
}

struct CorruptOptions {
  std::string kind;
  int severity = 3;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::string output;
};

int run_corrupt(const CorruptOptions& c, const ConfigOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  echo_config(cfg);
  // --seed doubles as the corruption seed here; --corruption-seed wins if both are given.
  const std::uint64_t seed = c.seed.value_or(o.seed.value_or(0));
  const CorruptionSpec spec{parse_corruption_kind(c.kind), c.severity, seed};
  if (spec.severity < 1 || spec.severity > 5) {
    throw Error(ErrorKind::kBadSeverity, "severity " + std::to_string(spec.severity) + " outside 1..5");
  }
  const ImageTensor image = read_png_rgb(c.input);
  if (o.dry_run) {
    print_plan({{"subcommand", "corrupt"}, {"kind", c.kind}, {"severity", c.severity}, {"seed", seed},
                {"input", c.input}, {"output", c.output}});
    return 0;
  }
  write_png_rgb(c.output, corrupt(image, spec));
  std::cout << "wrote " << c.output << '\n';
  return 0;
}

struct PredictOptions {
  std::string ckpt;
  std::string image;
  std::optional<std::string> prompt_file;
  std::string out;
  std::optional<std::string> contours;
};

int run_predict(const PredictOptions& p, const ConfigOptions& o) {
  ExperimentConfig cfg = resolve_config(o);
  const CheckpointMeta meta = read_checkpoint_meta(p.ckpt);
  cfg.model = meta.model;
  cfg.init_seed = meta.init_seed;
  echo_config(cfg);
  SegmentRequest req;
  const std::string bytes = read_file(p.image);
  req.image_png.assign(bytes.begin(), bytes.end());
  req.prompt = p.prompt_file ? json::parse(read_file(*p.prompt_file)) : json{{"kind", "none"}};
  if (o.dry_run) {
    print_plan({{"subcommand", "predict"}, {"checkpoint", p.ckpt}, {"image", p.image}, {"out", p.out}});
    return 0;
  }
  auto model = std::make_shared<const SegModel<float>>(load_checkpoint(p.ckpt));
  const SegmentService service({RegisteredModel{"default", model, sha256_hex(read_file(p.ckpt))}}, 1);
  const SegmentResponse resp = service.handle_segment(req);
  std::ofstream(p.out, std::ios::binary)
      .write(reinterpret_cast<const char*>(resp.mask_png.data()), static_cast<std::streamsize>(resp.mask_png.size()));
  if (p.contours) {
    json doc = response_to_json(resp);
    doc.erase("mask");
    std::ofstream(*p.contours) << doc.dump(2) << '\n';
  }
  std::cout << "wrote " << p.out << " (" << resp.width << "x" << resp.height << ", " << resp.contours.size()
            << " contours)\n";
  return 0;
}

struct ServeOptions {
  std::vector<std::string> models;  // id=path or path
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 4;
  int max_forwards = 2;
};

int run_serve(const ServeOptions& s, const ConfigOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  echo_config(cfg);
  std::vector<std::pair<std::string, std::string>> specs;
  for (const auto& m : s.models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) {
      specs.emplace_back(std::filesystem::path(m).stem().string(), m);
    } else {
      specs.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    }
  }
  for (const auto& [id, path] : specs) read_checkpoint_meta(path);
  if (o.dry_run) {
    json list = json::array();
    for (const auto& [id, path] : specs) list.push_back({{"model_id", id}, {"checkpoint", path}});
    print_plan({{"subcommand", "serve"}, {"host", s.host}, {"port", s.port}, {"models", list}});
    return 0;
  }
  std::vector<RegisteredModel> registry;
  for (const auto& [id, path] : specs) {
    registry.push_back({id, std::make_shared<const SegModel<float>>(load_checkpoint(path)), sha256_hex(read_file(path))});
  }
  const SegmentService service(std::move(registry), s.max_forwards);
  std::cout << "serving on http://" << s.host << ":" << s.port << std::endl;
  serve_http(service, s.host, s.port, s.threads);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdzseg: prompt-conditioned dissection-zone segmentation"};
  app.require_subcommand(1);
  ConfigOptions common;

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth-data", "write a synthetic two-blob dataset");
  add_config_options(c_synth, common);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--size", synth.cfg.image_size, "image side");
  c_synth->add_option("--train-videos", synth.cfg.train_videos);
  c_synth->add_option("--test-videos", synth.cfg.test_videos);
  c_synth->add_option("--frames", synth.cfg.frames_per_video, "frames per video");
  c_synth->add_flag("--target-both", synth.cfg.target_both, "label both blobs");
  c_synth->add_option("--data-seed", synth.cfg.seed);

  PromptOptions prompts;
  auto* c_prompts = app.add_subcommand("gen-prompts", "synthesize prompts from ground-truth masks");
  add_config_options(c_prompts, common);
  c_prompts->add_option("--split", prompts.split);
  c_prompts->add_option("--kind", prompts.kind, "none | point | short_scribble | long_scribble | bbox");
  c_prompts->add_option("--out", prompts.out, "output directory")->required();

  auto* c_train = app.add_subcommand("train", "train a model");
  add_config_options(c_train, common);

  EvalCliOptions ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_config_options(c_eval, common);
  c_eval->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  c_eval->add_option("--split", ev.split);
  c_eval->add_option("--prompt", ev.prompt, "prompt kind drawn from ground truth");
  c_eval->add_option("--corruption", ev.corruption, "corruption kind");
  c_eval->add_option("--severity", ev.severity);
  c_eval->add_option("--corruption-seed", ev.corruption_seed);
  c_eval->add_option("--out", ev.out, "metrics report JSON");

  CorruptOptions cor;
  auto* c_corrupt = app.add_subcommand("corrupt", "apply an image corruption");
  add_config_options(c_corrupt, common);
  c_corrupt->add_option("--kind", cor.kind, "gaussian_noise | motion_blur | smoke | brightness | contrast")->required();
  c_corrupt->add_option("--severity", cor.severity);
  c_corrupt->add_option("--corruption-seed", cor.seed);
  c_corrupt->add_option("input", cor.input)->required()->check(CLI::ExistingFile);
  c_corrupt->add_option("output", cor.output)->required();

  PredictOptions pred;
  auto* c_predict = app.add_subcommand("predict", "segment one image");
  add_config_options(c_predict, common);
  c_predict->add_option("--ckpt", pred.ckpt)->required();
  c_predict->add_option("--image", pred.image)->required()->check(CLI::ExistingFile);
  c_predict->add_option("--prompt", pred.prompt_file, "prompt document (JSON file)");
  c_predict->add_option("--out", pred.out, "mask PNG")->required();
  c_predict->add_option("--contours", pred.contours, "contour JSON");

  ServeOptions srv;
  auto* c_serve = app.add_subcommand("serve", "run the HTTP inference service");
  add_config_options(c_serve, common);
  c_serve->add_option("--model", srv.models, "checkpoint or id=checkpoint (repeatable)")->required();
  c_serve->add_option("--host", srv.host);
  c_serve->add_option("--port", srv.port);
  c_serve->add_option("--threads", srv.threads);
  c_serve->add_option("--max-forwards", srv.max_forwards);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsageError;
  }

  try {
    if (*c_synth) return run_synth(synth, common);
    if (*c_prompts) return run_gen_prompts(prompts, common);
    if (*c_train) return run_train(common);
    if (*c_eval) return run_eval_cmd(ev, common);
    if (*c_corrupt) return run_corrupt(cor, common);
    if (*c_predict) return run_predict(pred, common);
    if (*c_serve) return run_serve(srv, common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  std::cerr << app.help();
  return kUsageError;
}
