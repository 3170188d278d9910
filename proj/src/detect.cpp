#include "jules/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "jules/error.hpp"
#include "jules/noise_sim.hpp"
#include "jules/parallel.hpp"
#include "jules/random.hpp"

namespace jules {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double quantile_type7(std::vector<double>& x, double p) {
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lo), x.end());
  const double v_lo = x[lo];
  if (lo + 1 >= x.size()) return v_lo;
  const double v_hi = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(lo) + 1, x.end());
  return v_lo + (h - static_cast<double>(lo)) * (v_hi - v_lo);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(IntervalSystem system) { return system == IntervalSystem::dyadic ? "dyadic" : "all"; }

IntervalSystem parse_interval_system(const std::string& name) {
  if (name == "dyadic") return IntervalSystem::dyadic;
  if (name == "all") return IntervalSystem::all;
  throw InvalidArgument("unknown interval system '" + name + "'");
}

std::vector<std::size_t> interval_lengths(IntervalSystem system, std::size_t n) {
  std::vector<std::size_t> out;
  if (system == IntervalSystem::dyadic) {
    for (std::size_t len = 1; len <= n; len *= 2) out.push_back(len);
  } else {
    for (std::size_t len = 1; len <= n; ++len) out.push_back(len);
  }
  return out;
}

void DetectionConfig::validate() const {
  if (q) {
    require(std::isfinite(*q), "critical value must be finite");
  } else {
    require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    require(mc_reps >= 100, "at least 100 Monte Carlo repetitions are required");
  }
  if (sigma) require(std::isfinite(*sigma) && *sigma >= 0.0, "sigma must be non-negative");
}

double estimate_sigma(const Trace& trace, const TruncatedFilter& filter) {
  const std::size_t m = static_cast<std::size_t>(filter.m());
  const std::size_t n = trace.size();
  require(n > m + 1, "trace too short to estimate the noise level");
  std::vector<double> diffs(n - m);
  for (std::size_t i = 0; i + m < n; ++i) diffs[i] = trace[i + m] - trace[i];
  std::vector<double> scratch = diffs;
  const double q75 = quantile_type7(scratch, 0.75);
  scratch = diffs;
  const double q25 = quantile_type7(scratch, 0.25);
  const double iqr = q75 - q25;
  if (!(iqr > 0.0)) return 0.0;
  const double z75 = boost::math::quantile(boost::math::normal(), 0.75);
  return iqr / (2.0 * z75 * std::sqrt(2.0 * filter.acf()[0]));
}

double penalty(std::size_t length, std::size_t n) {
  require(length >= 1 && length <= n, "penalty needs 1 <= length <= n");
  return std::sqrt(2.0 * std::log(std::numbers::e * static_cast<double>(n) / static_cast<double>(length)));
}

double partial_sum_sd(std::size_t length, std::span<const double> acf) {
  const double len = static_cast<double>(length);
  double var = len * acf[0];
  for (std::size_t k = 1; k < acf.size() && k < length; ++k) var += 2.0 * (len - static_cast<double>(k)) * acf[k];
  return std::sqrt(var);
}

MultiscaleContext::MultiscaleContext(const Trace& trace, const TruncatedFilter& filter, double sigma,
                                     IntervalSystem system)
    : n_(trace.size()), sigma_(sigma), system_(system), lengths_(interval_lengths(system, trace.size())) {
  require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be non-negative");
  sd_.reserve(lengths_.size());
  pen_.reserve(lengths_.size());
  for (std::size_t len : lengths_) {
    sd_.push_back(sigma * partial_sum_sd(len, filter.acf()));
    pen_.push_back(penalty(len, n_));
  }
  const auto y = trace.values();
  offset_ = y[0];
  prefix_.assign(n_ + 1, 0.0);
  prefix_sq_.assign(n_ + 1, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const double c = y[i] - offset_;
    prefix_[i + 1] = prefix_[i] + c;
    prefix_sq_[i + 1] = prefix_sq_[i] + c * c;
  }
}

std::vector<std::size_t> grid_indices(const StepSignal& seg, double sampling_rate) {
  std::vector<std::size_t> out;
  out.reserve(seg.change_count());
  for (double tau : seg.change_times()) {
    const double x = tau * sampling_rate;
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-6) throw InvalidArgument("change times are not on the sampling grid");
    out.push_back(static_cast<std::size_t>(r));
  }
  return out;
}

double multiscale_statistic(const Trace& trace, const StepSignal& candidate, const MultiscaleContext& ctx) {
  require(trace.size() == ctx.n(), "trace and context disagree on n");
  const auto starts = grid_indices(candidate, trace.sampling_rate());
  const auto levels = candidate.levels();
  const std::size_t n = ctx.n();
  double best = -kInf;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    // 0-based sample range [a, b) of segment k.
    const std::size_t a = k == 0 ? 0 : std::min(n, starts[k - 1] - 1);
    const std::size_t b = k + 1 == levels.size() ? n : std::min(n, starts[k] - 1);
    if (b <= a) continue;
    const double c = levels[k] - ctx.offset();
    for (std::size_t lv = 0; lv < ctx.lengths().size(); ++lv) {
      const std::size_t len = ctx.lengths()[lv];
      if (len > b - a) break;
      const double sd = ctx.scale_sd(lv);
      const double pen = ctx.penalty_at(lv);
      for (std::size_t i = a; i + len <= b; ++i) {
        const double r = std::abs(ctx.sum(i, len) - c * static_cast<double>(len));
        double v;
        if (sd > 0.0) {
          v = r / sd - pen;
        } else {
          v = r > 1e-9 * static_cast<double>(len) ? kInf : -pen;
        }
        best = std::max(best, v);
      }
    }
  }
  return best;
}

double null_statistic(std::span<const double> noise, std::span<const std::size_t> lengths,
                      std::span<const double> sds, std::span<const double> pens) {
  const std::size_t n = noise.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + noise[i];
  double best = -kInf;
  for (std::size_t lv = 0; lv < lengths.size(); ++lv) {
    const std::size_t len = lengths[lv];
    if (len > n) break;
    double largest = 0.0;
    for (std::size_t i = 0; i + len <= n; ++i) largest = std::max(largest, std::abs(prefix[i + len] - prefix[i]));
    best = std::max(best, largest / sds[lv] - pens[lv]);
  }
  return best;
}

std::vector<double> null_distribution(std::size_t n, const TruncatedFilter& filter, int reps, std::uint64_t seed,
                                      IntervalSystem system, int threads) {
  require(n >= 1, "n must be positive");
  require(reps >= 1, "reps must be positive");
  char key_buf[320];
  std::snprintf(key_buf, sizeof key_buf, "null|%s|n=%zu|reps=%d|seed=%llu|%s", filter.id().c_str(), n, reps,
                static_cast<unsigned long long>(seed), to_string(system).c_str());
  const std::string key = key_buf;

  static std::mutex mutex;
  static std::map<std::string, std::vector<double>> memory;
  {
    std::lock_guard lock(mutex);
    if (auto it = memory.find(key); it != memory.end()) return it->second;
  }

  std::filesystem::path disk_path;
  if (const char* dir = std::getenv("JULES_QUANTILE_CACHE"); dir != nullptr && *dir != '\0') {
    char name[40];
    std::snprintf(name, sizeof name, "%016llx.bin", static_cast<unsigned long long>(fnv1a(key)));
    disk_path = std::filesystem::path(dir) / name;
    std::ifstream in(disk_path, std::ios::binary);
    std::string header;
    if (in && std::getline(in, header) && header == key) {
      std::vector<double> draws(static_cast<std::size_t>(reps));
      in.read(reinterpret_cast<char*>(draws.data()), static_cast<std::streamsize>(draws.size() * sizeof(double)));
      if (in) {
        std::fprintf(stderr, "quantile cache hit: %s\n", disk_path.c_str());
        std::lock_guard lock(mutex);
        memory.emplace(key, draws);
        return draws;
      }
    }
  }

  const auto theta = ma_coefficients(filter.acf());
  const auto lengths = interval_lengths(system, n);
  std::vector<double> sds, pens;
  for (std::size_t len : lengths) {
    sds.push_back(partial_sum_sd(len, filter.acf()));
    pens.push_back(penalty(len, n));
  }
  std::vector<double> draws(static_cast<std::size_t>(reps));
  parallel_for(draws.size(), threads, [&](std::size_t r) {
    const auto noise = ma_noise(theta, n, 1.0, derive_seed(seed, r));
    draws[r] = null_statistic(noise, lengths, sds, pens);
  });
  std::sort(draws.begin(), draws.end());

  if (!disk_path.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(disk_path.parent_path(), ec);
    const auto tmp = disk_path.string() + ".tmp";
    std::ofstream out(tmp, std::ios::binary);
    out << key << '\n';
    out.write(reinterpret_cast<const char*>(draws.data()), static_cast<std::streamsize>(draws.size() * sizeof(double)));
    out.close();
    if (out) std::filesystem::rename(tmp, disk_path, ec);
  }
  std::lock_guard lock(mutex);
  memory.emplace(key, draws);
  return draws;
}

double empirical_quantile(std::span<const double> sorted, double p) {
  require(!sorted.empty(), "no draws");
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

double multiscale_quantile(std::size_t n, const TruncatedFilter& filter, double alpha, int reps, std::uint64_t seed,
                           IntervalSystem system, int threads) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(reps >= 100, "at least 100 Monte Carlo repetitions are required");
  const auto draws = null_distribution(n, filter, reps, seed, system, threads);
  return empirical_quantile(draws, 1.0 - alpha);
}

namespace {

/// Feasible level band [lo, hi] of one system interval, as a pair.
struct Band {
  double lo;
  double hi;
};

class SegmentSolver {
 public:
  SegmentSolver(const MultiscaleContext& ctx, double q) : ctx_(ctx) {
    for (std::size_t lv = 0; lv < ctx.lengths().size(); ++lv)
      half_width_.push_back(ctx.scale_sd(lv) * (q + ctx.penalty_at(lv)));
  }

  std::size_t levels() const { return half_width_.size(); }
  std::size_t length(std::size_t lv) const { return ctx_.lengths()[lv]; }

  Band band(std::size_t i, std::size_t lv) const {
    const double len = static_cast<double>(ctx_.lengths()[lv]);
    const double s = ctx_.sum(i, ctx_.lengths()[lv]);
    return {(s - half_width_[lv]) / len, (s + half_width_[lv]) / len};
  }

  /// Residual sum of squares of segment [a, b] at the best admissible level, and that level.
  std::pair<double, double> cost(std::size_t a, std::size_t b, double lo, double hi) const {
    const std::size_t len = b - a + 1;
    const double s = ctx_.sum(a, len);
    const double mean = s / static_cast<double>(len);
    const double c = std::clamp(mean, lo, hi);
    const double rss = (ctx_.sum_squares(a, len) - s * mean) + static_cast<double>(len) * (c - mean) * (c - mean);
    return {rss, c};
  }

 private:
  const MultiscaleContext& ctx_;
  std::vector<double> half_width_;
};

struct DpTables {
  // Index b + 1 holds the optimum for the prefix [0, b]; index 0 is the empty prefix.
  std::vector<std::size_t> segments;
  std::vector<double> cost;
  std::vector<std::size_t> start;
  std::vector<double> level;

  explicit DpTables(std::size_t n) : segments(n + 1, 0), cost(n + 1, 0.0), start(n + 1, 0), level(n + 1, 0.0) {}
};

void solve_unpruned(const SegmentSolver& solver, std::size_t n, DpTables& dp) {
  for (std::size_t b = 0; b < n; ++b) {
    double lo = -kInf, hi = kInf;
    std::size_t best_k = std::numeric_limits<std::size_t>::max();
    double best_cost = kInf, best_level = 0.0;
    std::size_t best_a = 0;
    for (std::size_t a = b + 1; a-- > 0;) {
      for (std::size_t lv = 0; lv < solver.levels() && a + solver.length(lv) <= b + 1; ++lv) {
        const Band band = solver.band(a, lv);
        lo = std::max(lo, band.lo);
        hi = std::min(hi, band.hi);
      }
      if (!(lo <= hi)) continue;
      const auto [rss, c] = solver.cost(a, b, lo, hi);
      const std::size_t k = dp.segments[a] + 1;
      const double total = dp.cost[a] + rss;
      if (k < best_k || (k == best_k && total <= best_cost)) {
        best_k = k;
        best_cost = total;
        best_a = a;
        best_level = c;
      }
    }
    if (best_k == std::numeric_limits<std::size_t>::max())
      throw NumericalError("no feasible segmentation for this critical value");
    dp.segments[b + 1] = best_k;
    dp.cost[b + 1] = best_cost;
    dp.start[b + 1] = best_a;
    dp.level[b + 1] = best_level;
  }
}

void solve_pruned(const SegmentSolver& solver, std::size_t n, DpTables& dp) {
  struct Entry {
    std::size_t index;
    double value;
  };
  const std::size_t levels = solver.levels();
  // Per length: max-deque of lower band edges and min-deque of upper edges over
  // interval starts in [leftmost, b - len + 1].
  std::vector<std::deque<Entry>> lower(levels), upper(levels);
  // last_prefix[k]: largest prefix end (table index) whose optimum uses k segments.
  std::vector<std::size_t> last_prefix{0};
  std::size_t leftmost = 0;

  auto first_at_or_after = [](const std::deque<Entry>& dq, std::size_t idx) {
    return std::lower_bound(dq.begin(), dq.end(), idx, [](const Entry& e, std::size_t v) { return e.index < v; });
  };

  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t lv = 0; lv < levels; ++lv) {
      const std::size_t len = solver.length(lv);
      if (len > b + 1) break;
      const std::size_t i = b + 1 - len;
      if (i < leftmost) continue;
      const Band band = solver.band(i, lv);
      auto& lq = lower[lv];
      while (!lq.empty() && lq.back().value <= band.lo) lq.pop_back();
      lq.push_back({i, band.lo});
      auto& uq = upper[lv];
      while (!uq.empty() && uq.back().value >= band.hi) uq.pop_back();
      uq.push_back({i, band.hi});
    }

    // Advance the leftmost feasible start; feasibility is monotone in the start.
    while (true) {
      double lo = -kInf, hi = kInf;
      for (std::size_t lv = 0; lv < levels; ++lv) {
        if (!lower[lv].empty()) lo = std::max(lo, lower[lv].front().value);
        if (!upper[lv].empty()) hi = std::min(hi, upper[lv].front().value);
      }
      if (lo <= hi) break;
      if (++leftmost > b) throw NumericalError("no feasible segmentation for this critical value");
      for (std::size_t lv = 0; lv < levels; ++lv) {
        while (!lower[lv].empty() && lower[lv].front().index < leftmost) lower[lv].pop_front();
        while (!upper[lv].empty() && upper[lv].front().index < leftmost) upper[lv].pop_front();
      }
    }

    // Only starts whose prefix uses the minimal number of segments can be optimal;
    // segment counts are nondecreasing in the prefix end, so they form a range.
    const std::size_t k_min = dp.segments[leftmost];
    const std::size_t right = std::min(b, last_prefix[k_min]);

    double lo = -kInf, hi = kInf;
    for (std::size_t lv = 0; lv < levels; ++lv) {
      if (solver.length(lv) > b + 1 - right) break;
      const auto lit = first_at_or_after(lower[lv], right);
      if (lit != lower[lv].end()) lo = std::max(lo, lit->value);
      const auto uit = first_at_or_after(upper[lv], right);
      if (uit != upper[lv].end()) hi = std::min(hi, uit->value);
    }

    double best_cost = kInf, best_level = 0.0;
    std::size_t best_a = right;
    for (std::size_t a = right + 1; a-- > leftmost;) {
      if (a < right) {
        for (std::size_t lv = 0; lv < levels && a + solver.length(lv) <= b + 1; ++lv) {
          const Band band = solver.band(a, lv);
          lo = std::max(lo, band.lo);
          hi = std::min(hi, band.hi);
        }
      }
      const auto [rss, c] = solver.cost(a, b, lo, hi);
      const double total = dp.cost[a] + rss;
      if (total <= best_cost) {
        best_cost = total;
        best_a = a;
        best_level = c;
      }
    }
    dp.segments[b + 1] = k_min + 1;
    dp.cost[b + 1] = best_cost;
    dp.start[b + 1] = best_a;
    dp.level[b + 1] = best_level;
    if (last_prefix.size() <= k_min + 1) last_prefix.resize(k_min + 2, 0);
    last_prefix[k_min + 1] = b + 1;
  }
}

}  // namespace

StepSignal fit_segmentation(const Trace& trace, const MultiscaleContext& ctx, double q,
                            const SegmentationOptions& options) {
  require(std::isfinite(q), "critical value must be finite");
  require(trace.size() == ctx.n(), "trace and context disagree on n");
  const std::size_t n = ctx.n();
  const SegmentSolver solver(ctx, q);
  DpTables dp(n);
  if (options.prune) {
    solve_pruned(solver, n, dp);
  } else {
    solve_unpruned(solver, n, dp);
  }

  const std::size_t cap = options.max_changes.value_or(std::max<std::size_t>(1, n / 2));
  if (dp.segments[n] - 1 > cap) throw NumericalError("number of changes exceeds the configured maximum");

  std::vector<double> times, levels;
  for (std::size_t end = n; end > 0;) {
    const std::size_t a = dp.start[end];
    levels.push_back(dp.level[end] + ctx.offset());
    if (a > 0) times.push_back(static_cast<double>(a + 1) / trace.sampling_rate());
    end = a;
  }
  std::reverse(times.begin(), times.end());
  std::reverse(levels.begin(), levels.end());
  // A one-sample final segment would put its change on the end time itself.
  double end_time = static_cast<double>(n) / trace.sampling_rate();
  if (!times.empty() && times.back() >= end_time) end_time = (static_cast<double>(n) + 0.5) / trace.sampling_rate();
  return StepSignal::merged(std::move(times), std::move(levels), end_time);
}

StepSignal postfilter(const StepSignal& seg, const TruncatedFilter& filter) {
  const auto taus = seg.change_times();
  const auto levels = seg.levels();
  const double m = static_cast<double>(filter.m());
  const double fs = filter.sampling_rate();
  std::vector<double> times_out;
  std::vector<double> levels_out{levels[0]};
  std::size_t i = 0;
  while (i < taus.size()) {
    // Change i moves from levels[i] to levels[i + 1].
    const bool up = levels[i + 1] > levels[i];
    std::size_t j = i;
    while (j + 1 < taus.size() && (taus[j + 1] - taus[i]) * fs < m - 1e-9 && (levels[j + 2] > levels[j + 1]) == up)
      ++j;
    times_out.push_back(taus[i]);
    levels_out.push_back(levels[j + 1]);
    i = j + 1;
  }
  return StepSignal::merged(std::move(times_out), std::move(levels_out), seg.end_time());
}

}  // namespace jules
