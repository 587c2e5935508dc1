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

#include "xstain/manifest.hpp"

#include <fstream>

#include <nlohmann/json.hpp>
#include "xstain/byteio.hpp"

namespace xstain {

using nlohmann::json;

namespace {

json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "manifest '" + path.string() + "': " + e.what());
  }
}

}  // namespace

CaseSet load_manifest(const std::filesystem::path& path, std::optional<bool> require_ihc) {
  const json doc = parse_json_file(path);
  const auto base = path.parent_path();
  const std::string where = "manifest '" + path.string() + "'";
  if (!doc.is_object() || !doc.contains("cases") || !doc["cases"].is_array())
    fail(ErrorKind::kFormat, where + ": missing top-level 'cases' list");
  const bool need_ihc = require_ihc.value_or(doc.value("require_ihc", true));

  CaseSet set;
  std::vector<int> labels;
  std::vector<Survival> survival;
  std::size_t n_labels = 0, n_survival = 0;
  try {
    for (const auto& jc : doc["cases"]) {
      AlignedCase c;
      c.case_id = jc.at("case_id").get<std::string>();
      for (const auto& [name, rel] : jc.at("bags").items()) {
        const auto stain = parse_stain(name);
        if (!stain) fail(ErrorKind::kFormat, where + ": case '" + c.case_id + "' has unknown stain '" + name + "'");
        const auto file = base / rel.get<std::string>();
        if (!std::filesystem::exists(file))
          fail(ErrorKind::kIo, where + ": case '" + c.case_id + "' references missing file '" + file.string() + "'");
        c.bags[*stain] = read_bag_file(file);
      }
      if (!c.has(StainId::kHE)) fail(ErrorKind::kAlignment, "case '" + c.case_id + "': missing HE bag");
      validate_case(c, need_ihc);
      if (jc.contains("label")) {
        const int l = jc["label"].get<int>();
        if (l != 0 && l != 1) fail(ErrorKind::kFormat, where + ": case '" + c.case_id + "' label must be 0 or 1");
        labels.push_back(l);
        ++n_labels;
      } else {
        labels.push_back(-1);
      }
      if (jc.contains("survival")) {
        Survival s{jc["survival"].at("time").get<double>(), jc["survival"].at("event").get<bool>()};
        if (!(s.time > 0.0)) fail(ErrorKind::kFormat, where + ": case '" + c.case_id + "' survival time must be positive");
        survival.push_back(s);
        ++n_survival;
      } else {
        survival.push_back({});
      }
      set.cases.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, where + ": " + e.what());
  }
  const std::size_t n = set.cases.size();
  if (n_labels != 0 && n_labels != n) fail(ErrorKind::kFormat, where + ": labels present for only some cases");
  if (n_survival != 0 && n_survival != n) fail(ErrorKind::kFormat, where + ": survival present for only some cases");
  if (n_labels == n && n > 0) set.labels = std::move(labels);
  if (n_survival == n && n > 0) set.survival = std::move(survival);
  validate_case_set(set, need_ihc);
  return set;
}

std::filesystem::path write_dataset(const CaseSet& set, const std::filesystem::path& dir, bool require_ihc) {
  validate_case_set(set, require_ihc);
  std::filesystem::create_directories(dir / "bags");
  json cases = json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set.cases[i];
    json jc;
    jc["case_id"] = c.case_id;
    json bags = json::object();
    for (const auto& [stain, bag] : c.bags) {
      const std::string rel = "bags/" + c.case_id + "_" + std::string(stain_name(stain)) + ".cseb";
      write_bag_file(bag, dir / rel);
      bags[std::string(stain_name(stain))] = rel;
    }
    jc["bags"] = bags;
    if (set.labels) jc["label"] = (*set.labels)[i];
    if (set.survival) jc["survival"] = {{"time", (*set.survival)[i].time}, {"event", (*set.survival)[i].event}};
    cases.push_back(jc);
  }
  json doc;
  doc["require_ihc"] = require_ihc;
  doc["cases"] = cases;
  const auto path = dir / "manifest.json";
  write_file_text(path, doc.dump(2) + "\n");
  return path;
}

}  // namespace xstain
