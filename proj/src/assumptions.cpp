#include "fieldkf/assumptions.hpp"

#include <sstream>

#include "fieldkf/io.hpp"

namespace fieldkf {

std::string AssumptionReport::to_text() const {
  std::ostringstream os;
  for (const AssumptionCheck& c : checks) {
    os << "check " << c.index << ' ' << to_string(c.status) << "  " << c.name;
    for (const auto& [k, v] : c.values) os << "  " << k << '=' << io::format_double(v);
    if (!c.detail.empty()) os << "  (" << c.detail << ')';
    os << '\n';
  }
  return os.str();
}

}  // namespace fieldkf
