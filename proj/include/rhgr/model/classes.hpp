#pragma once

#include <array>
#include <string>

#include "rhgr/core.hpp"

namespace rhgr {

// Background must stay at index 0: the metrics treat it specially.
enum class GestureClass : int {
  Background = 0,
  SwipeLeft = 1,
  SwipeRight = 2,
  SwipeUp = 3,
  SwipeDown = 4,
  Push = 5,
};

inline constexpr int kNumClasses = 6;
inline constexpr int kNumGestureClasses = 5;  // excluding Background

inline const std::array<const char*, 6> kClassNames = {
    "Background", "SwipeLeft", "SwipeRight", "SwipeUp", "SwipeDown", "Push"};

inline std::string class_name(int c) {
  if (c < 0 || c >= kNumClasses) throw InputError("class_name: invalid class id");
  return kClassNames[static_cast<std::size_t>(c)];
}

inline int class_from_name(const std::string& name) {
  for (int c = 0; c < kNumClasses; ++c)
    if (name == kClassNames[static_cast<std::size_t>(c)]) return c;
  throw InputError("class_from_name: unknown class '" + name + "'");
}

}  // namespace rhgr
