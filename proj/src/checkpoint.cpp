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

#include <fstream>
#include <sstream>

#include "pnp/pipeline.hpp"

namespace pnp::pipe
{

using nlohmann::json;

namespace
{

constexpr int kCheckpointVersion = 1;

json read_json(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw io::FormatError("cannot open checkpoint " + path);
  }
  try {
    json j = json::parse(in);
    if (j.value("format", "") != "pnp-ckpt") {
      throw io::FormatError(path + ": not a checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw io::FormatError(
        path + ": checkpoint version " + j.at("version").dump() + ", expected " + std::to_string(kCheckpointVersion));
    }
    return j;
  } catch (const io::FormatError &) {
    throw;
  } catch (const std::exception & e) {
    throw io::FormatError(path + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string & path, Model & model, const RunConfig & config)
{
  if (!(config.model == model.config)) {
    throw std::invalid_argument("save_checkpoint: run config does not describe this model");
  }
  json params = json::object();
  visit_params(model, [&](const std::string & name, diff::Value & v) {
    params[name] = {{"shape", v.shape()}, {"data", v.data()}};
  });
  const json doc{
    {"format", "pnp-ckpt"}, {"version", kCheckpointVersion}, {"config", to_json(config)}, {"params", params}};
  std::ofstream out(path);
  if (!out) {
    throw io::FormatError("cannot write checkpoint " + path);
  }
  out << doc.dump() << '\n';
  if (!out) {
    throw io::FormatError("write failed for checkpoint " + path);
  }
}

RunConfig checkpoint_config(const std::string & path)
{
  return run_config_from_json(read_json(path).at("config"));
}

Model load_checkpoint(const std::string & path, const ModelConfig & expected)
{
  const json doc = read_json(path);
  const RunConfig stored = run_config_from_json(doc.at("config"));
  RunConfig wanted;
  wanted.model = expected;
  const json want = to_json(wanted).at("model");
  const json have = to_json(stored).at("model");
  for (const auto & [key, value] : want.items()) {
    if (have.at(key) != value) {
      throw io::FormatError(
        path + ": model " + key + " is " + have.at(key).dump() + ", expected " + value.dump());
    }
  }
  Model model = make_model(expected, 0);
  const json & params = doc.at("params");
  std::size_t seen = 0;
  visit_params(model, [&](const std::string & name, diff::Value & v) {
    if (!params.contains(name)) {
      throw io::FormatError(path + ": missing parameter " + name);
    }
    const auto & p = params.at(name);
    if (p.at("shape").get<diff::Shape>() != v.shape()) {
      throw io::FormatError(path + ": parameter " + name + " has shape " + p.at("shape").dump());
    }
    const auto data = p.at("data").get<std::vector<double>>();
    if (data.size() != v.size()) {
      throw io::FormatError(path + ": parameter " + name + " has the wrong size");
    }
    std::copy(data.begin(), data.end(), v.mutable_data().begin());
    ++seen;
  });
  if (seen != params.size()) {
    throw io::FormatError(path + ": checkpoint holds unknown parameters");
  }
  return model;
}

}  // namespace pnp::pipe
