#include "gazestab/trial_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "gazestab/errors.hpp"

namespace gazestab {

namespace {

using json = nlohmann::json;

const std::set<std::string> kTrialKeys = {"id", "target", "plane_distance", "plane_extent",
                                          "fixation_onset", "samples"};
const std::set<std::string> kSampleKeys = {"t",        "pos",         "lin_speed", "ang_speed",
                                           "head_pos", "gaze_origin", "gaze_dir"};

Vec2 vec2_from(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw SchemaError(std::string(field) + " must be a 2-element numeric array");
  return {j[0].get<double>(), j[1].get<double>()};
}

Vec3 vec3_from(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3)
    throw SchemaError(std::string(field) + " must be a 3-element numeric array");
  for (const auto& v : j)
    if (!v.is_number()) throw SchemaError(std::string(field) + " must be numeric");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double number_from(const json& j, const char* field) {
  if (!j.is_number()) throw SchemaError(std::string(field) + " must be a number");
  return j.get<double>();
}

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(std::string("missing field '") + field + "'");
  return *it;
}

GazeSample sample_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("sample must be an object");
  GazeSample s;
  s.t = number_from(require(j, "t"), "t");
  s.pos = vec2_from(require(j, "pos"), "pos");
  s.lin_speed = number_from(require(j, "lin_speed"), "lin_speed");
  s.ang_speed = number_from(require(j, "ang_speed"), "ang_speed");
  if (j.contains("head_pos")) s.head_pos = vec3_from(j["head_pos"], "head_pos");
  if (j.contains("gaze_origin")) s.gaze_origin = vec3_from(j["gaze_origin"], "gaze_origin");
  if (j.contains("gaze_dir")) s.gaze_dir = vec3_from(j["gaze_dir"], "gaze_dir");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kSampleKeys.contains(it.key())) s.extra[it.key()] = it.value();
  return s;
}

template <class Json>
Json vec_json(Vec2 v) {
  return Json::array({v.x, v.y});
}

template <class Json>
Json vec_json(Vec3 v) {
  return Json::array({v.x, v.y, v.z});
}

}  // namespace

Trial trial_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  Trial trial;
  const json& id = require(j, "id");
  if (!id.is_string()) throw SchemaError("id must be a string");
  trial.id = id.get<std::string>();
  trial.target = vec2_from(require(j, "target"), "target");
  trial.plane_distance = number_from(require(j, "plane_distance"), "plane_distance");
  if (j.contains("plane_extent"))
    trial.plane_extent = number_from(j["plane_extent"], "plane_extent");
  if (j.contains("fixation_onset") && !j["fixation_onset"].is_null()) {
    const json& onset = j["fixation_onset"];
    if (!onset.is_number_unsigned() && !(onset.is_number_integer() && onset.get<long long>() >= 0))
      throw SchemaError("fixation_onset must be a non-negative integer");
    trial.fixation_onset = onset.get<std::size_t>();
  }
  const json& samples = require(j, "samples");
  if (!samples.is_array()) throw SchemaError("samples must be an array");
  trial.samples.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      trial.samples.push_back(sample_from_json(samples[i]));
    } catch (const SchemaError& e) {
      throw SchemaError("samples[" + std::to_string(i) + "]: " + e.what());
    }
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kTrialKeys.contains(it.key())) trial.extra[it.key()] = it.value();
  return trial;
}

nlohmann::ordered_json trial_to_json(const Trial& trial) {
  using ojson = nlohmann::ordered_json;
  ojson j;
  j["id"] = trial.id;
  j["target"] = vec_json<ojson>(trial.target);
  j["plane_distance"] = trial.plane_distance;
  if (trial.plane_extent != 2.0) j["plane_extent"] = trial.plane_extent;
  if (trial.fixation_onset) j["fixation_onset"] = *trial.fixation_onset;
  ojson samples = ojson::array();
  for (const GazeSample& s : trial.samples) {
    ojson o;
    o["t"] = s.t;
    o["pos"] = vec_json<ojson>(s.pos);
    o["lin_speed"] = s.lin_speed;
    o["ang_speed"] = s.ang_speed;
    if (s.head_pos) o["head_pos"] = vec_json<ojson>(*s.head_pos);
    if (s.gaze_origin) o["gaze_origin"] = vec_json<ojson>(*s.gaze_origin);
    if (s.gaze_dir) o["gaze_dir"] = vec_json<ojson>(*s.gaze_dir);
    if (s.extra.is_object())
      for (auto it = s.extra.begin(); it != s.extra.end(); ++it) o[it.key()] = it.value();
    samples.push_back(std::move(o));
  }
  j["samples"] = std::move(samples);
  if (trial.extra.is_object())
    for (auto it = trial.extra.begin(); it != trial.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

std::vector<Trial> read_trials(std::istream& in) {
  std::vector<Trial> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      trials.push_back(trial_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trials;
}

std::vector<Trial> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_trials(in);
}

void write_trials(std::ostream& out, const std::vector<Trial>& trials) {
  for (const Trial& t : trials) out << trial_to_json(t).dump() << '\n';
}

void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_trials(out, trials);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace gazestab
