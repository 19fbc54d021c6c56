// Copyright 2026 The hccrop Authors.
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

#include "hccrop/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "hccrop/checkpoint.hpp"
#include "hccrop/dataset.hpp"
#include "hccrop/error.hpp"
#include "hccrop/evaluation.hpp"
#include "hccrop/synth.hpp"

namespace hccrop {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<double> parse_list(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw ValidationError("not a number: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

// Options shared by the verbs; unused ones stay empty.
struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string resume;
  std::string image;
  std::string human_box;
  std::string protocol = "gaicd";
  std::string baseline;
  std::string scales;
  std::string heatmap_out;
  std::string overlay_out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<int> count;
  std::vector<std::string> ablate;
};

std::optional<fs::path> optional_path(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path out_dir = o.out;
  DatasetIndex data = load_annotations(o.data, "train");
  for (const auto& d : data.diagnostics) err << "warning: " << d.to_string() << "\n";
  if (data.images.empty()) throw ValidationError("training dataset " + o.data + " is empty");

  std::optional<Checkpoint> resumed;
  RunConfig cfg;
  if (!o.resume.empty()) {
    resumed = load_checkpoint(o.resume);
    resumed->config.at("model").get_to(cfg.model);
    resumed->config.at("train").get_to(cfg.train);
  } else {
    cfg = load_run_config(optional_path(o.config));
    for (const auto& a : o.ablate) apply_ablation(cfg.model, a);
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.lambda) cfg.train.lambda = *o.lambda;
  }
  cfg.model.validate();
  cfg.train.validate();

  fs::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "config.json", make_config_json(cfg.model, cfg.train).dump(2) + "\n");
  write_text(out_dir / "dataset_stats.json", data.statistics().dump(2) + "\n");

  CroppingModel model(cfg.model, cfg.train.seed);
  Trainer trainer(model, cfg.train);
  if (resumed) trainer.restore(*resumed);

  std::ofstream log(out_dir / "train_log.jsonl", resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log in " + out_dir.string());
  double epoch_total = 0.0;
  std::size_t epoch_steps = 0;
  out << "training " << cfg.model.label() << " on " << data.images.size() << " images, epochs "
      << trainer.completed_epochs() + 1 << ".." << cfg.train.epochs << "\n";
  try {
    trainer.fit(
        data,
        [&](const StepRecord& r) {
          log << r.to_json().dump() << "\n";
          epoch_total += r.loss.total;
          ++epoch_steps;
        },
        [&](int epoch) {
          log.flush();
          const Checkpoint ckpt = trainer.checkpoint();
          std::ostringstream name;
          name << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
          save_checkpoint(ckpt, out_dir / "checkpoints" / name.str());
          save_checkpoint(ckpt, out_dir / "last.ckpt");
          out << "epoch " << epoch << "/" << cfg.train.epochs << " mean_total "
              << epoch_total / double(std::max<std::size_t>(1, epoch_steps)) << "\n";
          epoch_total = 0.0;
          epoch_steps = 0;
        });
  } catch (const NonFiniteLossError& e) {
    log.flush();
    write_text(out_dir / "failure.json", e.diagnostic() + "\n");
    err << "error: " << e.what() << "; diagnostic written to " << (out_dir / "failure.json").string() << "\n";
    return kExitRuntime;
  }
  out << "checkpoint " << (out_dir / "last.ckpt").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const Protocol protocol = parse_protocol(o.protocol);
  const DatasetIndex data = load_annotations(o.data, "test");
  for (const auto& d : data.diagnostics) err << "warning: " << d.to_string() << "\n";

  EvalReport report;
  if (!o.baseline.empty()) {
    if (protocol != Protocol::kIouDisp) throw ValidationError("baselines are evaluated with --protocol iou-disp");
    CandidateParams params = load_run_config(optional_path(o.config)).model.candidates;
    if (!o.checkpoint.empty()) params = model_from_checkpoint(load_checkpoint(o.checkpoint)).config().candidates;
    report = evaluate_baseline(parse_baseline(o.baseline), data, params);
  } else {
    if (o.checkpoint.empty()) throw ValidationError("evaluate needs --checkpoint (or --baseline)");
    const CroppingModel model = model_from_checkpoint(load_checkpoint(o.checkpoint));
    report = evaluate(model, data, protocol);
  }
  if (o.out.empty()) {
    out << report.to_json().dump(2) << "\n";
  } else {
    write_text(o.out, report.to_json().dump(2) + "\n");
    out << report.to_table();
  }
  return kExitOk;
}

int cmd_crop(const Options& o, std::ostream& out, std::ostream&) {
  const Image image = load_image(o.image);
  std::optional<Box> human;
  if (!o.human_box.empty()) {
    const Box b = parse_box(o.human_box);
    human = make_box(b.x1, b.y1, b.x2, b.y2, image.size());
  }

  std::optional<CroppingModel> model;
  CandidateParams params = load_run_config(optional_path(o.config)).model.candidates;
  if (!o.checkpoint.empty()) {
    model.emplace(model_from_checkpoint(load_checkpoint(o.checkpoint)));
    params = model->config().candidates;
  }
  if (!o.scales.empty()) params.scales = parse_list(o.scales);

  json result;
  std::optional<Heatmap> heatmap;
  Box box;
  if (!o.baseline.empty()) {
    const Baseline which = parse_baseline(o.baseline);
    if (!human) throw ValidationError("--baseline needs --human-box");
    box = which == Baseline::kA ? baseline_a(*human) : baseline_b(*human, generate_candidates(image.size(), params),
                                                                    image.size());
    result["source"] = baseline_label(which);
  } else {
    if (!model) throw ValidationError("crop needs --checkpoint (or --baseline)");
    BestCrop best = predict_best_crop(*model, image, human, params);
    box = best.box;
    heatmap = std::move(best.heatmap);
    result["source"] = "model";
    result["label"] = model->config().label();
    result["score"] = best.scores[best.index];
    result["candidates"] = best.candidates.size();
  }
  result["box"] = box_to_json(box);

  if (!o.heatmap_out.empty()) {
    if (!heatmap) throw ValidationError("--heatmap-out needs a model with the content branch enabled");
    save_heatmap(o.heatmap_out, *heatmap);
  }
  if (!o.overlay_out.empty()) save_image(o.overlay_out, overlay(image, heatmap ? &*heatmap : nullptr, box));
  out << result.dump() << "\n";
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out, std::ostream&) {
  SynthSpec spec;
  if (!o.config.empty()) read_json_file(o.config).get_to(spec);
  if (o.seed) spec.seed = *o.seed;
  if (o.count) spec.count = *o.count;
  const DatasetIndex data = synth_generate(spec);
  write_dataset(data, o.out);
  const json stats = data.statistics();
  write_text(fs::path(o.out) / "dataset_stats.json", stats.dump(2) + "\n");
  out << stats.dump(2) << "\n";
  return kExitOk;
}

int cmd_heatmap(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_run_config(optional_path(o.config));
  const DatasetIndex data = load_annotations(o.data, "train");
  for (const auto& d : data.diagnostics) err << "warning: " << d.to_string() << "\n";
  if (!data.mean_score) throw ValidationError("dataset " + o.data + " has no scored crops");
  fs::create_directories(o.out);
  json manifest = json::array();
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const AnnotatedImage& img = data.images[i];
    const MapSize size = heatmap_size(cfg.model, img.size);
    const auto selected = select_highly_scored(img.crops, *data.mean_score);
    if (selected.empty()) continue;
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << "_heatmap.png";
    save_heatmap(fs::path(o.out) / name.str(), pseudo_heatmap(selected, img.size, size));
    manifest.push_back({{"image", img.image}, {"heatmap", name.str()}, {"rows", size.rows}, {"cols", size.cols},
                        {"selected", selected.size()}});
  }
  write_text(fs::path(o.out) / "heatmaps.json", manifest.dump(2) + "\n");
  out << "wrote " << manifest.size() << " heatmaps (threshold " << *data.mean_score << ") to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

RunConfig load_run_config(const std::optional<fs::path>& path) {
  RunConfig cfg;
  if (!path) return cfg;
  const json j = read_json_file(*path);
  if (!j.is_object()) throw ValidationError("config " + path->string() + " must be a JSON object");
  try {
    if (j.contains("model")) j.at("model").get_to(cfg.model);
    if (j.contains("train")) j.at("train").get_to(cfg.train);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path->string() + ": " + e.what());
  }
  return cfg;
}

void apply_ablation(ModelConfig& config, const std::string& flag) {
  if (flag == "partition") {
    config.use_partition = false;
    config.use_human_feature = false;
  } else if (flag == "human") {
    config.use_human_feature = false;
  } else if (flag == "residual") {
    config.use_residual = false;
  } else if (flag == "content") {
    config.use_content = false;
  } else if (flag == "graph") {
    config.use_graph = false;
  } else {
    throw ValidationError("unknown ablation '" + flag + "'");
  }
}

Box parse_box(const std::string& text) {
  const std::vector<double> v = parse_list(text);
  if (v.size() != 4) throw ValidationError("box needs four numbers x1,y1,x2,y2");
  const Box b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw ValidationError("degenerate box '" + text + "'");
  return b;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Human-centric image cropping: training, evaluation and inference", "hccrop"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> ablations{"partition", "human", "residual", "content", "graph"};

  auto* train = app.add_subcommand("train", "Train a model on an annotation file");
  train->add_option("--config", o.config, "JSON config {\"model\": ..., \"train\": ...}")->check(CLI::ExistingFile);
  train->add_option("--data", o.data, "Annotation JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--seed", o.seed, "Seed for initialization, shuffling and crop sampling");
  train->add_option("--lambda", o.lambda, "Content loss weight");
  train->add_option("--ablate", o.ablate, "Disable a component (repeatable)")->check(CLI::IsMember(ablations));
  train->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint or a baseline");
  evaluate->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--data", o.data, "Annotation JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--protocol", o.protocol, "gaicd or iou-disp")
      ->check(CLI::IsMember({"gaicd", "iou-disp"}));
  evaluate->add_option("--baseline", o.baseline, "Evaluate baseline a or b instead of a model")
      ->check(CLI::IsMember({"a", "b"}));
  evaluate->add_option("--config", o.config, "Config supplying candidate parameters for baselines")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", o.out, "Write the JSON report here and print a table");

  auto* crop = app.add_subcommand("crop", "Best crop for one image");
  crop->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  crop->add_option("--image", o.image, "Input image")->required();
  crop->add_option("--human-box", o.human_box, "x1,y1,x2,y2 in pixels");
  crop->add_option("--baseline", o.baseline, "Bypass the model with baseline a or b")
      ->check(CLI::IsMember({"a", "b"}));
  crop->add_option("--scales", o.scales, "Candidate scales, comma separated");
  crop->add_option("--config", o.config, "Config supplying candidate parameters")->check(CLI::ExistingFile);
  crop->add_option("--heatmap-out", o.heatmap_out, "Write the predicted heatmap as grayscale");
  crop->add_option("--overlay-out", o.overlay_out, "Write the image with heatmap tint and crop outline");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scored-crop dataset");
  synth->add_option("--config", o.config, "Synthetic dataset settings JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--count", o.count, "Number of images");

  auto* heatmap = app.add_subcommand("heatmap", "Export pseudo ground-truth heatmaps");
  heatmap->add_option("--data", o.data, "Annotation JSON")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--out", o.out, "Output directory")->required();
  heatmap->add_option("--config", o.config, "Config supplying the model geometry")->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (train->parsed()) return cmd_train(o, out, err);
    if (evaluate->parsed()) return cmd_evaluate(o, out, err);
    if (crop->parsed()) return cmd_crop(o, out, err);
    if (synth->parsed()) return cmd_synth(o, out, err);
    if (heatmap->parsed()) return cmd_heatmap(o, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace hccrop
