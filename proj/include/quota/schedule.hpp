#pragma once

#include <cstdint>
#include <string_view>

namespace quota {

struct Schedule {
  enum class Kind { constant, linear };
  Kind kind = Kind::constant;
  double start = 0.0;
  double end = 0.0;
  std::int64_t horizon = 1;

  static Schedule constant(double v) { return {Kind::constant, v, v, 1}; }
  static Schedule linear(double start, double end, std::int64_t horizon) {
    return {Kind::linear, start, end, horizon};
  }
};

/// constant -> start; linear -> start..end over `horizon` steps, then end.
/// Throws std::invalid_argument for step < 0 or a non-positive linear horizon.
double resolve_schedule(const Schedule& s, std::int64_t step);

Schedule::Kind parse_schedule_kind(std::string_view id);

}  // namespace quota
