#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nesla/metrics.hpp"

namespace nesla {

inline constexpr const char* kOrientationHeader = "#orientation=bonafide-high";

struct ScoreFile {
  std::vector<ScoreRecord> records;
  // Other '#' lines after the orientation header, without the leading '#'.
  std::vector<std::string> comments;
};

// Header, optional comment lines, then utt_id<TAB>score<TAB>label rows.
void write_scores(std::ostream& out, const ScoreFile& file);
void write_scores(const std::filesystem::path& path, const ScoreFile& file);
// Throws unless the first line declares the bonafide-high orientation.
ScoreFile read_scores(std::istream& in);
ScoreFile read_scores(const std::filesystem::path& path);

// printf("%.17g"), the form every report and score file uses.
std::string format_value(double v);

}  // namespace nesla
