#pragma once

namespace stdisagg {

  inline constexpr char const* version = "0.1.0";

} // end of namespace stdisagg
