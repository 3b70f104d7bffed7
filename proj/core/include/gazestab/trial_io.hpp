#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gazestab/gaze_core.hpp"

namespace gazestab {

// JSONL trial interchange: one object per line with the fields
//   id, target:[x,y], plane_distance, samples:[{t,pos:[x,y],lin_speed,ang_speed}]
// plus the optional plane_extent, fixation_onset, and per-sample head_pos,
// gaze_origin, gaze_dir. Anything else is carried through untouched.

Trial trial_from_json(const nlohmann::json& j);
nlohmann::ordered_json trial_to_json(const Trial& trial);

/// Parses a JSONL stream. Blank lines are skipped. Throws SchemaError naming
/// the 1-based line number of the first malformed record.
std::vector<Trial> read_trials(std::istream& in);
std::vector<Trial> read_trials(const std::filesystem::path& path);

void write_trials(std::ostream& out, const std::vector<Trial>& trials);
/// Throws IoError when the file cannot be written.
void write_trials(const std::filesystem::path& path, const std::vector<Trial>& trials);

}  // namespace gazestab
