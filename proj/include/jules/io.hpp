#pragma once

#include <filesystem>
#include <string>

#include "jules/deconv.hpp"
#include "jules/signal.hpp"

namespace jules {

enum class TraceFormat { csv, binary };

/// csv unless the extension is .bin or .f64.
TraceFormat guess_trace_format(const std::filesystem::path& path);

// Trace CSV: a "# sample_hz=<f_s>" comment, header "index,value", one row per
// observation with 1-based index. Trace binary: little-endian float64 f_s,
// then the observations as little-endian float64.
void write_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format);
/// `fallback_rate` is used for CSV files without a sample_hz comment.
Trace read_trace(const std::filesystem::path& path, TraceFormat format, double fallback_rate = 0.0);

// StepSignal CSV: "# end_s=<end>" comment, header "segment_start_s,level";
// the first row starts at 0.
void write_step_signal(const std::filesystem::path& path, const StepSignal& signal);
StepSignal read_step_signal(const std::filesystem::path& path);

// Idealization CSV: StepSignal layout plus a provenance column, with the fit
// diagnostics in comment lines.
void write_idealization(const std::filesystem::path& path, const Idealization& ideal, double sample_hz);
Idealization read_idealization(const std::filesystem::path& path);

}  // namespace jules
