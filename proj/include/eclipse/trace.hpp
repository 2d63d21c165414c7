#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace eclipse {

enum class Granularity : int { kCoarse = 0, kFine = 1 };

inline const char* granularity_name(Granularity g) { return g == Granularity::kFine ? "fine" : "coarse"; }

struct TraceStep {
  int frame = -1;  // -1: no frame was extracted for this step
  Granularity granularity = Granularity::kCoarse;
  std::vector<double> p;
  double margin = 0.0;
  double exit_score = 0.0;
  bool exited = false;

  bool extracted() const { return frame >= 0; }
};

// Record of one evaluated episode.
struct EpisodeTrace {
  std::string video_id;
  std::vector<TraceStep> steps;
  double total_cost = 0.0;
  int answer = -1;
  int gt = -1;
  bool correct = false;

  std::size_t steps_used() const { return steps.size(); }
};

}  // namespace eclipse
