#include "quota/schedule.hpp"

#include <stdexcept>
#include <string>

namespace quota {

double resolve_schedule(const Schedule& s, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("resolve_schedule: negative step");
  if (s.kind == Schedule::Kind::constant) return s.start;
  if (s.horizon <= 0) throw std::invalid_argument("resolve_schedule: linear horizon must be > 0");
  if (step >= s.horizon) return s.end;
  const double frac = static_cast<double>(step) / static_cast<double>(s.horizon);
  return s.start + frac * (s.end - s.start);
}

Schedule::Kind parse_schedule_kind(std::string_view id) {
  if (id == "constant") return Schedule::Kind::constant;
  if (id == "linear") return Schedule::Kind::linear;
  throw std::invalid_argument("unknown schedule kind '" + std::string(id) + "'");
}

}  // namespace quota
