#include "tamo/harness/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"
#include "tamo/core/rng.hpp"
#include "tamo/harness/config.hpp"

namespace tamo::harness {

namespace {

struct Sample {
  double regret, cum_ms;
};

using RunKey = std::tuple<std::string, std::string, std::uint64_t>;  // method, task, seed

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

AggregateRow summarize(const std::string& method, const std::string& task, std::size_t step,
                       const std::vector<Sample>& s, const AggregateOptions& opts, core::RngStream& rng) {
  AggregateRow row;
  row.method = method;
  row.task = task;
  row.step = step;
  row.n = s.size();
  const double n = double(s.size());
  for (const auto& x : s) {
    row.mean_regret += x.regret;
    row.mean_cum_time_ms += x.cum_ms;
  }
  row.mean_regret /= n;
  row.mean_cum_time_ms /= n;
  if (s.size() < 2) return row;
  double ss = 0.0;
  for (const auto& x : s) ss += (x.regret - row.mean_regret) * (x.regret - row.mean_regret);
  row.sd = std::sqrt(ss / (n - 1.0));
  if (opts.ci == CiMethod::normal) {
    row.ci95 = 1.96 * row.sd / std::sqrt(n);
  } else {
    std::vector<double> means(opts.bootstrap_resamples);
    for (auto& m : means) {
      double sum = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) sum += s[rng.index(s.size())].regret;
      m = sum / n;
    }
    row.ci95 = 0.5 * (quantile(means, 0.975) - quantile(means, 0.025));
  }
  return row;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<nlohmann::json> read_results(const std::vector<std::filesystem::path>& files) {
  if (files.empty()) throw ConfigError("aggregate: at least one results file is required");
  std::vector<nlohmann::json> out;
  std::optional<int> version;
  std::set<std::pair<RunKey, std::size_t>> seen;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw FormatError("cannot open results file " + f.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      const std::string where = f.string() + ":" + std::to_string(number);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        const int v = j.at("schema_version").get<int>();
        if (version && *version != v) throw FormatError(where + ": mixed schema versions " +
                                                        std::to_string(*version) + " and " + std::to_string(v));
        if (v != kSchemaVersion) throw FormatError(where + ": unsupported schema version " + std::to_string(v));
        version = v;
        RunKey key{j.at("method").get<std::string>(), j.at("task_id").get<std::string>(),
                   j.at("seed").get<std::uint64_t>()};
        if (!seen.insert({key, j.at("step").get<std::size_t>()}).second) {
          throw FormatError(where + ": step recorded twice for one run");
        }
        j.at("regret").get<double>();
        j.at("proposal_ms").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(where + ": " + e.what());
      }
      out.push_back(std::move(j));
    }
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<nlohmann::json>& records, const AggregateOptions& opts) {
  // Per run: step -> (regret, proposal_ms).
  std::map<RunKey, std::map<std::size_t, std::pair<double, double>>> runs;
  for (const auto& j : records) {
    RunKey key{j.at("method").get<std::string>(), j.at("task_id").get<std::string>(),
               j.at("seed").get<std::uint64_t>()};
    runs[key][j.at("step").get<std::size_t>()] = {j.at("regret").get<double>(), j.at("proposal_ms").get<double>()};
  }

  using GroupKey = std::tuple<std::string, std::string, std::size_t>;
  std::map<GroupKey, std::vector<Sample>> per_task;
  std::map<std::pair<std::string, std::size_t>, std::vector<Sample>> pooled;
  for (const auto& [key, steps] : runs) {
    const auto& [method, task, seed] = key;
    if (opts.pooled && task == "all") throw FormatError("aggregate: task id 'all' clashes with the pooled rows");
    double cum = 0.0;
    for (const auto& [step, v] : steps) {
      cum += v.second;
      per_task[{method, task, step}].push_back({v.first, cum});
      if (opts.pooled) pooled[{method, step}].push_back({v.first, cum});
    }
  }

  core::RngStream rng(opts.seed, 0x626f6f74);
  std::vector<AggregateRow> rows;
  std::string current;
  auto flush_pooled = [&](const std::string& method) {
    if (!opts.pooled) return;
    for (auto it = pooled.lower_bound({method, 0}); it != pooled.end() && it->first.first == method; ++it) {
      rows.push_back(summarize(method, "all", it->first.second, it->second, opts, rng));
    }
  };
  for (const auto& [key, samples] : per_task) {
    const auto& [method, task, step] = key;
    if (!rows.empty() && method != current) flush_pooled(current);
    current = method;
    rows.push_back(summarize(method, task, step, samples, opts, rng));
  }
  if (!rows.empty()) flush_pooled(current);
  return rows;
}

std::string to_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.task + "," + std::to_string(r.step) + "," + format_number(r.mean_regret) + "," +
           (r.ci95 ? format_number(*r.ci95) : "") + "," + format_number(r.mean_cum_time_ms) + "\n";
  }
  return out;
}

AggregateCommand aggregate_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                     std::optional<std::uint64_t> seed) {
  check_schema(j, "aggregate");
  const std::string ctx = "aggregate";
  core::require_keys(j, {"schema_version", "inputs", "out", "pooled", "ci", "bootstrap_resamples", "seed"}, ctx);
  AggregateCommand c;
  for (const auto& p : core::get_or(j, "inputs", std::vector<std::string>{}, ctx)) c.inputs.push_back(resolve(base, p));
  if (c.inputs.empty()) throw ConfigError("aggregate: inputs must list at least one results file");
  if (!j.contains("out")) throw ConfigError("aggregate: out is required");
  c.out = resolve(base, core::get_or<std::string>(j, "out", "", ctx));
  c.options.pooled = core::get_or(j, "pooled", c.options.pooled, ctx);
  const auto ci = core::get_or<std::string>(j, "ci", "normal", ctx);
  if (ci == "normal") {
    c.options.ci = CiMethod::normal;
  } else if (ci == "bootstrap") {
    c.options.ci = CiMethod::bootstrap;
  } else {
    throw ConfigError("aggregate.ci must be 'normal' or 'bootstrap'");
  }
  c.options.bootstrap_resamples = core::get_or(j, "bootstrap_resamples", c.options.bootstrap_resamples, ctx);
  if (c.options.bootstrap_resamples == 0) throw ConfigError("aggregate.bootstrap_resamples must be positive");
  c.options.seed = effective_seed(j, seed);
  return c;
}

std::vector<AggregateRow> run_aggregate(const AggregateCommand& c) {
  auto rows = aggregate(read_results(c.inputs), c.options);
  if (!c.out.parent_path().empty()) std::filesystem::create_directories(c.out.parent_path());
  core::write_text_atomic(c.out, to_csv(rows));
  return rows;
}

}  // namespace tamo::harness
