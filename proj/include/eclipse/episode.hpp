#pragma once

#include "eclipse/frame_encoders.hpp"
#include "eclipse/qa_bank.hpp"

namespace eclipse {

// One video paired with one question.
struct Episode {
  VideoSource video;
  QAInstance qa;
};

}  // namespace eclipse
