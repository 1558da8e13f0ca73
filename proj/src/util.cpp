#include "couple_sed/util.hpp"

#include <iomanip>
#include <sstream>

namespace csed {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace csed
