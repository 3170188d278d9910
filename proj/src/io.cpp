#include "jules/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <vector>

#include "jules/error.hpp"

namespace jules {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

struct CsvTable {
  std::map<std::string, std::string> meta;  // from "# key=value" comments
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable t;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        t.meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    t.rows.push_back(split(line));
    t.line_numbers.push_back(no);
    if (t.rows.back().size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(no) + ": expected " + std::to_string(t.header.size()) +
                    " columns");
    }
  }
  if (t.header.empty()) throw IoError("'" + path.string() + "' has no header row");
  return t;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const std::filesystem::path& path) {
  if (t.header.size() < want.size()) throw IoError("'" + path.string() + "' has an unexpected header");
  for (std::size_t i = 0; i < want.size(); ++i)
    if (t.header[i] != want[i]) throw IoError("'" + path.string() + "': expected column '" + want[i] + "'");
}

double meta_double(const CsvTable& t, const std::string& key, const std::filesystem::path& path) {
  const auto it = t.meta.find(key);
  if (it == t.meta.end()) throw IoError("'" + path.string() + "' lacks the '" + key + "' comment");
  return to_double(it->second, path, 0);
}

void put_le(std::ofstream& out, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

// Rebuilds times and levels from (segment_start, level) rows.
void parse_segments(const CsvTable& t, const std::filesystem::path& path, std::vector<double>& times,
                    std::vector<double>& levels) {
  if (t.rows.empty()) throw IoError("'" + path.string() + "' contains no segments");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double start = to_double(t.rows[r][0], path, t.line_numbers[r]);
    if (r > 0) times.push_back(start);
    levels.push_back(to_double(t.rows[r][1], path, t.line_numbers[r]));
  }
}

}  // namespace

TraceFormat guess_trace_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".bin" || ext == ".f64" ? TraceFormat::binary : TraceFormat::csv;
}

void write_trace(const std::filesystem::path& path, const Trace& trace, TraceFormat format) {
  if (format == TraceFormat::binary) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    put_le(out, trace.sampling_rate());
    for (double v : trace.values()) put_le(out, v);
    check_written(out, path);
    return;
  }
  auto out = open_out(path);
  out << "# sample_hz=" << fmt(trace.sampling_rate()) << "\nindex,value\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i + 1 << ',' << fmt(trace[i]) << '\n';
  check_written(out, path);
}

Trace read_trace(const std::filesystem::path& path, TraceFormat format, double fallback_rate) {
  try {
    if (format == TraceFormat::binary) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot open '" + path.string() + "'");
      std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (buf.size() < 16 || buf.size() % 8 != 0) throw IoError("'" + path.string() + "' is not a binary trace");
      const double fs = get_le(buf.data());
      std::vector<double> values(buf.size() / 8 - 1);
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_le(buf.data() + 8 * (i + 1));
      return Trace(std::move(values), fs);
    }
    const CsvTable t = read_csv(path);
    const std::size_t col = t.header.size() >= 2 && t.header[1] == "value" ? 1 : 0;
    double fs = fallback_rate;
    if (t.meta.count("sample_hz")) fs = meta_double(t, "sample_hz", path);
    if (!(fs > 0.0)) throw IoError("'" + path.string() + "' does not state its sampling rate");
    std::vector<double> values;
    values.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) values.push_back(to_double(t.rows[r][col], path, t.line_numbers[r]));
    return Trace(std::move(values), fs);
  } catch (const InvalidArgument& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

void write_step_signal(const std::filesystem::path& path, const StepSignal& signal) {
  auto out = open_out(path);
  out << "# end_s=" << fmt(signal.end_time()) << "\nsegment_start_s,level\n";
  for (std::size_t k = 0; k < signal.segment_count(); ++k)
    out << fmt(k == 0 ? 0.0 : signal.change_times()[k - 1]) << ',' << fmt(signal.levels()[k]) << '\n';
  check_written(out, path);
}

StepSignal read_step_signal(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"segment_start_s", "level"}, path);
  std::vector<double> times, levels;
  parse_segments(t, path, times, levels);
  try {
    return StepSignal(std::move(times), std::move(levels), meta_double(t, "end_s", path));
  } catch (const InvalidArgument& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

void write_idealization(const std::filesystem::path& path, const Idealization& ideal, double sample_hz) {
  auto out = open_out(path);
  out << "# end_s=" << fmt(ideal.signal.end_time()) << '\n'
      << "# sample_hz=" << fmt(sample_hz) << '\n'
      << "# sigma_hat=" << fmt(ideal.sigma_hat) << '\n'
      << "# q=" << fmt(ideal.q_used) << '\n'
      << "# gamma2=" << fmt(ideal.gamma2) << '\n'
      << "segment_start_s,level,provenance\n";
  const auto& s = ideal.signal;
  for (std::size_t k = 0; k < s.segment_count(); ++k) {
    out << fmt(k == 0 ? 0.0 : s.change_times()[k - 1]) << ',' << fmt(s.levels()[k]) << ','
        << to_string(ideal.provenance[k]) << '\n';
  }
  check_written(out, path);
}

Idealization read_idealization(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"segment_start_s", "level", "provenance"}, path);
  std::vector<double> times, levels;
  parse_segments(t, path, times, levels);
  std::vector<Provenance> prov;
  try {
    for (const auto& row : t.rows) prov.push_back(parse_provenance(row[2]));
    StepSignal signal(std::move(times), std::move(levels), meta_double(t, "end_s", path));
    auto opt = [&](const char* key) { return t.meta.count(key) ? meta_double(t, key, path) : 0.0; };
    return Idealization{signal, std::move(prov), opt("sigma_hat"), opt("q"), opt("gamma2"), signal};
  } catch (const InvalidArgument& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace jules
