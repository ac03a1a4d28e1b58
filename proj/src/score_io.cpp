#include "nesla/score_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nesla {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_scores(std::ostream& out, const ScoreFile& file) {
  out << kOrientationHeader << '\n';
  for (const auto& c : file.comments) out << '#' << c << '\n';
  for (const auto& r : file.records) {
    out << r.utt_id << '\t' << format_value(r.score) << '\t' << to_string(r.label) << '\n';
  }
}

void write_scores(const std::filesystem::path& path, const ScoreFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write score file " + path.string());
  write_scores(out, file);
  if (!out) throw std::runtime_error("error writing score file " + path.string());
}

ScoreFile read_scores(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kOrientationHeader) {
    throw std::runtime_error(std::string("score file must start with '") + kOrientationHeader +
                             "'");
  }
  ScoreFile file;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      file.comments.push_back(line.substr(1));
      continue;
    }
    std::istringstream fields(line);
    std::string id, score, label, extra;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, score, '\t') ||
        !std::getline(fields, label, '\t') || std::getline(fields, extra, '\t')) {
      throw std::runtime_error("score file line " + std::to_string(lineno) +
                               ": expected utt_id, score and label");
    }
    ScoreRecord r;
    r.utt_id = id;
    std::size_t used = 0;
    try {
      r.score = std::stod(score, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != score.size()) {
      throw std::runtime_error("score file line " + std::to_string(lineno) + ": bad score '" +
                               score + "'");
    }
    r.label = parse_trial_label(label);
    file.records.push_back(std::move(r));
  }
  return file;
}

ScoreFile read_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open score file " + path.string());
  return read_scores(in);
}

}  // namespace nesla
