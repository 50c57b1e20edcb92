// Copyright 2026 The QGDF-PnP Authors
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

// Command line front end: simgen, gradcheck, train, eval, gates, plot.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pnp/diffcore/grad_check.hpp"
#include "pnp/diffcore/ops.hpp"
#include "pnp/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pnp;

namespace
{

struct Flags
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string scenes;
  std::string out;
  bool no_lidar = false;
  std::optional<double> camera_noise;
  std::optional<std::size_t> steps;
  std::string checkpoint;
  std::optional<std::size_t> count;
  std::string input;
};

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(path + ": cannot open");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error & e) {
    throw io::FormatError(path + ": " + e.what());
  }
}

void write_json_file(const fs::path & path, const json & doc)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error(path.string() + ": write failed");
  }
}

pipe::RunConfig base_config(const Flags & f)
{
  pipe::RunConfig rc = f.config.empty() ? pipe::RunConfig{} : pipe::run_config_from_json(read_json_file(f.config));
  if (f.seed) {
    rc.seed = *f.seed;
    rc.train.seed = *f.seed;
  }
  if (f.steps) {
    rc.train.steps = *f.steps;
  }
  if (f.no_lidar) {
    rc.no_lidar = true;
  }
  if (f.camera_noise) {
    rc.camera_noise = *f.camera_noise;
  }
  return rc;
}

std::vector<sim::SceneRecord> load_or_generate(const Flags & f, const pipe::RunConfig & rc)
{
  if (!f.scenes.empty()) {
    return io::read_scenes(f.scenes);
  }
  return sim::generate_scenes(rc.sim, rc.num_scenes, rc.seed);
}

fs::path require_out(const Flags & f)
{
  if (f.out.empty()) {
    throw UsageError("--out is required");
  }
  return f.out;
}

// ---------------------------------------------------------------- simgen

int cmd_simgen(const Flags & f)
{
  auto rc = base_config(f);
  if (f.count) {
    rc.num_scenes = *f.count;
  }
  const fs::path out = require_out(f);
  const auto scenes = sim::generate_scenes(rc.sim, rc.num_scenes, rc.seed);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  io::write_scenes(out.string(), scenes, pipe::to_json(rc));
  std::size_t frames = 0;
  std::size_t agents = 0;
  for (const auto & s : scenes) {
    frames += s.frames.size();
    for (const auto & fr : s.frames) {
      agents += fr.agents.size();
    }
  }
  std::cout << json{{"scenes", scenes.size()}, {"frames", frames}, {"agent_frames", agents}, {"out", out.string()}}
                 .dump()
            << '\n';
  return 0;
}

// ------------------------------------------------------------- gradcheck

diff::Tensor uniform(const diff::Shape & shape, diff::Rng & rng, double lo, double hi)
{
  diff::Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double & v : t.data) {
    v = u(rng);
  }
  return t;
}

// One fusion stack with random features, every parameter and the query
// embeddings checked against central differences.
int cmd_gradcheck(const Flags & f)
{
  const auto rc = base_config(f);
  diff::Rng rng(rc.seed);
  qgdf::QgdfConfig cfg;
  cfg.embed_dim = 8;
  cfg.image_channels = 8;
  cfg.num_cameras = 2;
  cfg.num_levels = 2;
  cfg.num_points = 4;
  cfg.dropout = 0.0;
  std::vector<qgdf::QgdfParams> layers;
  for (int l = 0; l < 3; ++l) {
    layers.push_back(qgdf::make_qgdf_params(cfg, rng));
    // Away from the zero-initialized gate so the gate path carries gradient.
    layers.back().gate.layers.back() = diff::make_linear(cfg.embed_dim, 2, rng);
  }
  geom::RigConfig rig;
  rig.num_cameras = 2;
  rig.width = 64;
  rig.height = 48;
  rig.horizontal_fov_deg = 90.0;
  qgdf::FeaturePyramid pyramid;
  pyramid.calibs = geom::make_ring_rig(rig);
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<diff::Value> levels;
    for (std::size_t l = 0; l < 2; ++l) {
      levels.push_back(diff::Value::constant(uniform({8, std::size_t{12} >> l, std::size_t{16} >> l}, rng, -1, 1)));
    }
    pyramid.maps.push_back(levels);
  }
  pillars::BevMap bev;
  bev.present = true;
  bev.cell_size = 102.4 / 16.0;
  bev.origin = {-51.2, -51.2, -5.0};
  bev.features = diff::Value::constant(uniform({8, 16, 16}, rng, -1, 1));

  const geom::PerceptionVolume volume;
  diff::Tensor refs({3, 3});
  std::uniform_real_distribution<double> x(8.0, 20.0);
  std::uniform_real_distribution<double> y(-4.0, 4.0);
  std::uniform_real_distribution<double> z(0.0, 2.5);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto r = volume.normalize({x(rng), y(rng), z(rng)});
    std::copy(r.begin(), r.end(), refs.data.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  qgdf::Queries q{diff::Value::parameter(uniform({3, 8}, rng, -1, 1)), diff::Value::constant(refs)};
  const auto weights = diff::Value::constant(uniform({3, 8}, rng, -1, 1));

  std::vector<diff::CheckedInput> inputs{{"queries", q.embed}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    qgdf::visit_params(layers[l], "qgdf." + std::to_string(l), [&](const std::string & n, diff::Value & v) {
      inputs.push_back({n, v});
    });
  }
  qgdf::DetachedGateInputs detached;
  qgdf::qgdf_stack(q, pyramid, bev, layers, false, nullptr, volume, &detached);
  detached.frozen = true;
  const auto report = diff::grad_check(
    [&] {
      const auto out = qgdf::qgdf_stack(q, pyramid, bev, layers, false, nullptr, volume, &detached);
      return diff::mean(out.queries.embed * weights);
    },
    inputs);

  json per_input = json::array();
  for (const auto & in : report.inputs) {
    per_input.push_back(
      {{"name", in.name}, {"checked", in.checked}, {"max_rel_error", in.max_rel_error},
       {"failures", in.failures.size()}, {"excluded", in.excluded.size()}});
  }
  const json doc{
    {"run_config", pipe::to_json(rc)}, {"passed", report.passed()}, {"tolerance", report.tol},
    {"checked", report.total_checked()}, {"excluded", report.total_excluded()},
    {"max_rel_error", report.max_rel_error()}, {"inputs", per_input}};
  if (!f.out.empty()) {
    write_json_file(f.out, doc);
  }
  std::cout << json{{"passed", report.passed()}, {"checked", report.total_checked()},
                    {"max_rel_error", report.max_rel_error()}}
                 .dump()
            << '\n';
  return report.passed() ? 0 : 1;
}

// ----------------------------------------------------------------- train

json step_json(const pipe::StepLog & s)
{
  return {
    {"step", s.step}, {"total", s.total}, {"cls", s.cls}, {"coord", s.coord},
    {"trajectory", s.trajectory}, {"camera_noise", s.camera_noise}};
}

int cmd_train(const Flags & f)
{
  const auto rc = base_config(f);
  const fs::path out = require_out(f);
  const auto scenes = load_or_generate(f, rc);
  auto model = pipe::make_model(rc.model, rc.seed);
  const auto before = pipe::fixed_set_loss(model, scenes, 20, rc.train.clip_frames, 10, rc.no_lidar);
  json steps = json::array();
  pipe::train(model, scenes, rc.train, rc.no_lidar, [&](const pipe::StepLog & s) {
    steps.push_back(step_json(s));
    if ((s.step + 1) % 25 == 0 || s.step + 1 == rc.train.steps) {
      std::cerr << json{{"step", s.step}, {"total", s.total}}.dump() << '\n';
    }
  });
  const auto after = pipe::fixed_set_loss(model, scenes, 20, rc.train.clip_frames, 10, rc.no_lidar);
  fs::create_directories(out);
  pipe::save_checkpoint((out / "model.ckpt").string(), model, rc);
  write_json_file(
    out / "loss.json", {{"run_config", pipe::to_json(rc)},
                        {"parameters", pipe::parameter_count(model)},
                        {"fixed_set_before", step_json(before)},
                        {"fixed_set_after", step_json(after)},
                        {"steps", steps}});
  std::cout << json{{"checkpoint", (out / "model.ckpt").string()}, {"fixed_set_before", before.total},
                    {"fixed_set_after", after.total}}
                 .dump()
            << '\n';
  return 0;
}

// ------------------------------------------------------------ eval/gates

struct Loaded
{
  pipe::RunConfig config;
  pipe::Model model;
  std::vector<sim::SceneRecord> scenes;
};

Loaded load_for_eval(const Flags & f)
{
  if (f.checkpoint.empty()) {
    throw UsageError("--checkpoint is required");
  }
  Loaded l;
  // The checkpoint fixes the model; a --config may only restate it.
  l.config = pipe::checkpoint_config(f.checkpoint);
  if (!f.config.empty()) {
    const auto given = pipe::run_config_from_json(read_json_file(f.config));
    l.config.model = given.model;
    l.config.sim = given.sim;
    l.config.score_threshold = given.score_threshold;
  }
  if (f.seed) {
    l.config.seed = *f.seed;
  }
  if (f.no_lidar) {
    l.config.no_lidar = true;
  }
  if (f.camera_noise) {
    l.config.camera_noise = *f.camera_noise;
  }
  l.model = pipe::load_checkpoint(f.checkpoint, l.config.model);
  l.scenes = load_or_generate(f, l.config);
  return l;
}

json gates_json(const pipe::GateReport & g)
{
  json bins = json::array();
  for (const auto & b : g.bins) {
    bins.push_back({{"points", b.label}, {"count", b.count}, {"mean_lidar_gate", b.mean_gate}});
  }
  return {{"rows", g.rows.size()}, {"mean_lidar_gate", g.mean_gate}, {"bins", bins}};
}

json displacement_json(const metrics::Displacement & d)
{
  const auto opt = [](const std::optional<double> & v) { return v ? json(*v) : json(nullptr); };
  return {{"minADE", opt(d.min_ade)}, {"minFDE", opt(d.min_fde)}, {"MR", opt(d.miss_rate)}};
}

pipe::EvalOptions eval_options(const pipe::RunConfig & rc)
{
  pipe::EvalOptions o;
  o.no_lidar = rc.no_lidar;
  o.camera_noise = rc.camera_noise;
  o.score_threshold = rc.score_threshold;
  return o;
}

int cmd_eval(const Flags & f)
{
  const fs::path out = require_out(f);
  auto l = load_for_eval(f);
  const auto result = pipe::evaluate_scenes(l.model, l.scenes, eval_options(l.config));
  fs::create_directories(out);
  write_json_file(out / "metrics.json", pipe::metrics_json(result.report));
  json per_class = json::object();
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    const auto & v = result.report.epa_per_class[static_cast<std::size_t>(c)];
    per_class[std::string(class_name(c))] = v ? json(*v) : json(nullptr);
  }
  write_json_file(
    out / "report.json", {{"run_config", pipe::to_json(l.config)},
                          {"checkpoint", f.checkpoint},
                          {"metrics", pipe::metrics_json(result.report)},
                          {"epa_per_class", per_class},
                          {"constant_velocity", displacement_json(result.cv_baseline)},
                          {"predictions", result.predictions.size()},
                          {"mean_query_lidar_gate", result.mean_query_gate},
                          {"gates", gates_json(result.gates)}});
  io::write_predictions((out / "predictions.pred").string(), result.predictions, pipe::to_json(l.config));
  std::cout << pipe::metrics_json(result.report).dump() << '\n';
  return 0;
}

// Paired clean and camera-degraded runs of one checkpoint on the same scenes.
int cmd_gates(const Flags & f)
{
  const fs::path out = require_out(f);
  auto l = load_for_eval(f);
  const double degraded = f.camera_noise.value_or(4.0);
  auto clean_opt = eval_options(l.config);
  clean_opt.camera_noise = 1.0;
  auto noisy_opt = clean_opt;
  noisy_opt.camera_noise = degraded;
  const auto clean = pipe::evaluate_scenes(l.model, l.scenes, clean_opt);
  const auto noisy = pipe::evaluate_scenes(l.model, l.scenes, noisy_opt);
  auto rc = l.config;
  rc.camera_noise = degraded;
  const json doc{
    {"run_config", pipe::to_json(rc)},
    {"checkpoint", f.checkpoint},
    {"clean", {{"camera_noise", 1.0}, {"mean_query_lidar_gate", clean.mean_query_gate}, {"gates", gates_json(clean.gates)}}},
    {"degraded",
     {{"camera_noise", degraded}, {"mean_query_lidar_gate", noisy.mean_query_gate}, {"gates", gates_json(noisy.gates)}}},
    {"lidar_gate_rises", noisy.mean_query_gate > clean.mean_query_gate}};
  write_json_file(out, doc);
  std::cout << json{{"clean", clean.mean_query_gate}, {"degraded", noisy.mean_query_gate}}.dump() << '\n';
  return 0;
}

// ------------------------------------------------------------------ plot

std::string fmt(double v)
{
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

struct Series
{
  std::string name;
  std::string colour;
  std::vector<double> y;
};

// Line chart of one or more series over a shared x index.
std::string line_svg(const std::string & title, const std::vector<Series> & series, const std::string & x_label)
{
  const double w = 720;
  const double h = 400;
  const double left = 70;
  const double right = 20;
  const double top = 40;
  const double bottom = 50;
  double lo = 0.0;
  double hi = 1e-12;
  std::size_t n = 1;
  for (const auto & s : series) {
    for (const double v : s.y) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    n = std::max(n, s.y.size());
  }
  const auto px = [&](std::size_t i) { return left + (w - left - right) * static_cast<double>(i) / std::max<double>(1, n - 1); };
  const auto py = [&](double v) { return top + (h - top - bottom) * (1.0 - (v - lo) / (hi - lo)); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v) << "</text>\n";
  }
  svg << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < series[s].y.size(); ++i) {
      pts << px(i) << ',' << py(series[s].y[i]) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << series[s].colour << "\" stroke-width=\"1.5\" points=\"" << pts.str()
        << "\"/>\n";
    svg << "<text x=\"" << w - right - 150 << "\" y=\"" << top + 16 * (s + 1) << "\" fill=\"" << series[s].colour
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<double> moving_average(const std::vector<double> & v, std::size_t window)
{
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) {
      sum -= v[i - window];
    }
    out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

// Grouped bars: mean LiDAR gate per point-count bin, clean vs degraded.
std::string gates_svg(const json & doc)
{
  const auto & clean = doc.at("clean").at("gates").at("bins");
  const auto & noisy = doc.at("degraded").at("gates").at("bins");
  const double w = 760;
  const double h = 400;
  const double left = 60;
  const double top = 40;
  const double bottom = 60;
  const double plot_h = h - top - bottom;
  const std::size_t n = clean.size();
  const double slot = (w - left - 20) / static_cast<double>(n);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2
      << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">Mean LiDAR gate by points in "
         "box</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - 20 << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h * (1 - v) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = left + slot * static_cast<double>(i);
    const std::pair<const json *, const char *> bars[] = {{&clean[i], "#3b6ea8"}, {&noisy[i], "#d9822b"}};
    for (std::size_t b = 0; b < 2; ++b) {
      const auto & bin = *bars[b].first;
      const double g = bin.at("count").get<std::size_t>() ? bin.at("mean_lidar_gate").get<double>() : 0.0;
      svg << "<rect x=\"" << x + 4 + b * (slot - 8) / 2 << "\" y=\"" << top + plot_h * (1 - g) << "\" width=\""
          << (slot - 8) / 2 << "\" height=\"" << plot_h * g << "\" fill=\"" << bars[b].second << "\"/>\n";
    }
    svg << "<text x=\"" << x + slot / 2 << "\" y=\"" << h - bottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << clean[i].at("points").get<std::string>() << "</text>\n";
  }
  svg << "<text x=\"" << w - 200 << "\" y=\"" << top + 14
      << "\" fill=\"#3b6ea8\" font-family=\"sans-serif\" font-size=\"12\">clean cameras</text>\n";
  svg << "<text x=\"" << w - 200 << "\" y=\"" << top + 30
      << "\" fill=\"#d9822b\" font-family=\"sans-serif\" font-size=\"12\">degraded cameras</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

int cmd_plot(const Flags & f)
{
  if (f.input.empty()) {
    throw UsageError("--input is required (a loss.json from train or a gates file from gates)");
  }
  const fs::path out = require_out(f);
  const json doc = read_json_file(f.input);
  std::string svg;
  if (doc.contains("steps")) {
    std::vector<double> total;
    std::vector<double> cls;
    std::vector<double> coord;
    std::vector<double> traj;
    for (const auto & s : doc.at("steps")) {
      total.push_back(s.at("total").get<double>());
      cls.push_back(s.at("cls").get<double>());
      coord.push_back(s.at("coord").get<double>());
      traj.push_back(s.at("trajectory").get<double>());
    }
    const std::size_t window = 25;
    svg = line_svg(
      "Training loss per frame (25-step moving average)",
      {{"total", "#222222", moving_average(total, window)},
       {"classification", "#3b6ea8", moving_average(cls, window)},
       {"box", "#4f9a4f", moving_average(coord, window)},
       {"trajectory", "#d9822b", moving_average(traj, window)}},
      "step");
  } else if (doc.contains("clean") && doc.contains("degraded")) {
    svg = gates_svg(doc);
  } else {
    throw io::FormatError(f.input + ": neither a loss trace nor a gate comparison");
  }
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  std::ofstream file(out);
  file << svg;
  if (!file) {
    throw std::runtime_error(out.string() + ": write failed");
  }
  std::cout << json{{"out", out.string()}}.dump() << '\n';
  return 0;
}

void emit_error(const std::string & command, const std::string & kind, const std::string & message)
{
  std::cerr << json{{"error", kind}, {"command", command}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Camera/LiDAR perception and prediction toolkit"};
  app.require_subcommand(1);
  Flags flags;

  const auto common = [&](CLI::App * sub) {
    sub->add_option("--config", flags.config, "run config JSON");
    sub->add_option("--seed", flags.seed, "seed for scenes, initialization and training");
  };
  auto * simgen = app.add_subcommand("simgen", "generate synthetic scenes");
  common(simgen);
  simgen->add_option("--count", flags.count, "number of scenes (default: num_scenes of the config)");
  simgen->add_option("--out", flags.out, "scene file to write");

  auto * gradcheck = app.add_subcommand("gradcheck", "finite-difference check of a fusion stack");
  common(gradcheck);
  gradcheck->add_option("--out", flags.out, "optional JSON report");

  auto * train = app.add_subcommand("train", "train a model");
  common(train);
  train->add_option("--scenes", flags.scenes, "scene file (default: generate from the config)");
  train->add_option("--out", flags.out, "output directory");
  train->add_flag("--no-lidar", flags.no_lidar, "train without the LiDAR branch");
  train->add_option("--steps", flags.steps, "optimizer steps");

  auto * eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", flags.checkpoint, "checkpoint from train");
  eval->add_option("--scenes", flags.scenes, "scene file (default: generate from the config)");
  eval->add_option("--out", flags.out, "output directory");
  eval->add_flag("--no-lidar", flags.no_lidar, "evaluate without LiDAR");
  eval->add_option("--camera-noise", flags.camera_noise, "camera feature noise multiplier");

  auto * gates = app.add_subcommand("gates", "clean vs camera-degraded LiDAR gate comparison");
  common(gates);
  gates->add_option("--checkpoint", flags.checkpoint, "checkpoint from train");
  gates->add_option("--scenes", flags.scenes, "scene file (default: generate from the config)");
  gates->add_option("--out", flags.out, "JSON file to write");
  gates->add_flag("--no-lidar", flags.no_lidar, "evaluate without LiDAR");
  gates->add_option("--camera-noise", flags.camera_noise, "degraded noise multiplier (default 4)");

  auto * plot = app.add_subcommand("plot", "render a loss trace or gate comparison as SVG");
  plot->add_option("--input", flags.input, "loss.json or gates JSON");
  plot->add_option("--out", flags.out, "SVG file to write");

  std::string command = "pnp";
  try {
    app.parse(argc, argv);
    command = app.get_subcommands().front()->get_name();
    if (simgen->parsed()) {
      return cmd_simgen(flags);
    }
    if (gradcheck->parsed()) {
      return cmd_gradcheck(flags);
    }
    if (train->parsed()) {
      return cmd_train(flags);
    }
    if (eval->parsed()) {
      return cmd_eval(flags);
    }
    if (gates->parsed()) {
      return cmd_gates(flags);
    }
    return cmd_plot(flags);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    emit_error(command, "usage", e.what());
    return 2;
  } catch (const UsageError & e) {
    emit_error(command, "usage", e.what());
    return 2;
  } catch (const pipe::DivergenceError & e) {
    emit_error(command, "divergence", e.what());
    return 3;
  } catch (const io::FormatError & e) {
    emit_error(command, "format", e.what());
    return 4;
  } catch (const std::exception & e) {
    emit_error(command, "failure", e.what());
    return 1;
  }
}
