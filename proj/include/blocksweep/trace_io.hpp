#pragma once

// CSV trace sink. Floating fields carry 17 significant digits so replayed runs compare byte for byte.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "blocksweep/trace.hpp"

namespace blocksweep {

inline constexpr const char* kTraceHeader = "n,residual,dist_to_ref,active_mask,lambda,gamma,objective";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string format_trace(const IterateTrace& trace) {
  std::ostringstream out;
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.n << ',' << format_double(r.residual) << ',' << format_optional(r.dist_to_ref) << ','
        << (r.mask.size() ? r.mask.str() : std::string()) << ',' << format_optional(r.relax) << ','
        << format_optional(r.gamma) << ',' << format_optional(r.objective) << '\n';
  }
  return out.str();
}

/// Writes the trace CSV; throws Error on I/O failure.
inline void write_trace(const IterateTrace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("write_trace: cannot open " + path);
  const std::string text = format_trace(trace);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.close();
  if (!f) throw Error("write_trace: write failed for " + path);
}

}  // namespace blocksweep
