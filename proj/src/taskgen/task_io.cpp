#include "tamo/taskgen/task_io.hpp"

#include <cmath>
#include <cstring>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"

namespace tamo::taskgen {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'M', 'O', 'T', 'A', 'S', 'K'};

}  // namespace

nlohmann::json spec_to_json(const TaskSpec& s) {
  nlohmann::json j;
  j["d_x"] = s.d_x;
  j["d_y"] = s.d_y;
  std::vector<std::string> kernels;
  for (auto k : s.kernels) kernels.push_back(kernel_name(k));
  j["kernels"] = kernels;
  j["sigma"] = s.sigma;
  j["lengthscale"] = s.lengthscale;
  if (s.coregion.independent) {
    j["coregion"] = {{"independent", true}};
  } else {
    j["coregion"] = {{"independent", false}, {"rank", s.coregion.rank}, {"B", s.coregion.B}, {"v", s.coregion.v}};
  }
  j["noise_std"] = s.noise_std;
  j["small_lengthscale"] = s.small_lengthscale;
  j["bowl"] = {{"enabled", s.bowl.enabled}, {"sign", s.bowl.sign}, {"coef", s.bowl.coef}, {"optima", s.bowl.optima}};
  j["seed"] = s.seed;
  return j;
}

TaskSpec spec_from_json(const nlohmann::json& j) {
  try {
    TaskSpec s;
    s.d_x = j.at("d_x").get<std::size_t>();
    s.d_y = j.at("d_y").get<std::size_t>();
    for (const auto& k : j.at("kernels")) s.kernels.push_back(kernel_from_name(k.get<std::string>()));
    s.sigma = j.at("sigma").get<std::vector<double>>();
    s.lengthscale = j.at("lengthscale").get<std::vector<double>>();
    const auto& c = j.at("coregion");
    s.coregion.independent = c.at("independent").get<bool>();
    if (!s.coregion.independent) {
      s.coregion.rank = c.at("rank").get<std::size_t>();
      s.coregion.B = c.at("B").get<std::vector<double>>();
      s.coregion.v = c.at("v").get<std::vector<double>>();
    }
    s.noise_std = j.at("noise_std").get<double>();
    s.small_lengthscale = j.at("small_lengthscale").get<bool>();
    const auto& b = j.at("bowl");
    s.bowl.enabled = b.at("enabled").get<bool>();
    s.bowl.sign = b.at("sign").get<double>();
    s.bowl.coef = b.at("coef").get<double>();
    s.bowl.optima = b.at("optima").get<std::vector<std::vector<double>>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed task spec: ") + e.what());
  }
}

nlohmann::json to_json(const DimsConfig& d) { return {{"d_x", d.d_x}, {"d_y", d.d_y}}; }

DimsConfig dims_from_json(const nlohmann::json& j) {
  core::require_keys(j, {"d_x", "d_y"}, "dims");
  DimsConfig d;
  d.d_x = core::get_or(j, "d_x", d.d_x, "dims");
  d.d_y = core::get_or(j, "d_y", d.d_y, "dims");
  if (d.d_x.empty() || d.d_y.empty()) throw ConfigError("dims: d_x and d_y need at least one value");
  for (std::size_t v : d.d_x) {
    if (v == 0) throw ConfigError("dims: d_x values must be positive");
  }
  for (std::size_t v : d.d_y) {
    if (v == 0 || v > 3) throw ConfigError("dims: d_y values must lie in {1, 2, 3}");
  }
  return d;
}

nlohmann::json to_json(const PriorConfig& p) {
  return {{"small_lengthscale", p.small_lengthscale},
          {"quadratic_bowl", p.quadratic_bowl},
          {"bowl_sign", p.bowl_sign},
          {"bowl_coef", p.bowl_coef},
          {"noise_std", p.noise_std}};
}

PriorConfig prior_from_json(const nlohmann::json& j) {
  core::require_keys(j, {"small_lengthscale", "quadratic_bowl", "bowl_sign", "bowl_coef", "noise_std"}, "prior");
  PriorConfig p;
  p.small_lengthscale = core::get_or(j, "small_lengthscale", p.small_lengthscale, "prior");
  p.quadratic_bowl = core::get_or(j, "quadratic_bowl", p.quadratic_bowl, "prior");
  p.bowl_sign = core::get_or(j, "bowl_sign", p.bowl_sign, "prior");
  p.bowl_coef = core::get_or(j, "bowl_coef", p.bowl_coef, "prior");
  p.noise_std = core::get_or(j, "noise_std", p.noise_std, "prior");
  if (p.noise_std < 0.0) throw ConfigError("prior: noise_std must be non-negative");
  if (p.bowl_sign != 1.0 && p.bowl_sign != -1.0) throw ConfigError("prior: bowl_sign must be +1 or -1");
  return p;
}

std::vector<unsigned char> encode_task(const SampledTask& task) {
  nlohmann::json h;
  h["schema_version"] = kTaskFormatVersion;
  h["id"] = task.id;
  h["spec"] = spec_to_json(task.spec);
  h["n"] = task.size();
  h["d_x"] = task.d_x();
  h["d_y"] = task.d_y();
  h["ref"] = task.ref;
  h["hv_star"] = task.hv_star;
  h["resamples"] = task.resamples;
  h["dtype"] = "float32";
  h["byte_order"] = "little";
  const std::string header = h.dump();
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  core::put_u32(out, kTaskFormatVersion);
  core::put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const Matrix* m : {&task.pool_X, &task.pool_Y}) {
    for (double v : m->values()) core::put_f32(out, static_cast<float>(v));
  }
  return out;
}

SampledTask decode_task(const std::vector<unsigned char>& bytes) {
  core::ByteReader r(bytes, "task file");
  if (r.bytes(8) != std::string(kMagic, 8)) throw FormatError("not a task file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kTaskFormatVersion) throw FormatError("unsupported task file version " + std::to_string(version));
  const std::uint64_t hlen = r.u64();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("task header is not valid JSON: ") + e.what());
  }
  SampledTask t;
  try {
    if (h.at("schema_version").get<int>() != kTaskFormatVersion) throw FormatError("unsupported task schema version");
    t.id = h.at("id").get<std::string>();
    t.spec = spec_from_json(h.at("spec"));
    const auto n = h.at("n").get<std::size_t>();
    const auto dx = h.at("d_x").get<std::size_t>();
    const auto dy = h.at("d_y").get<std::size_t>();
    t.ref = h.at("ref").get<std::vector<double>>();
    t.hv_star = h.at("hv_star").get<double>();
    t.resamples = h.at("resamples").get<std::size_t>();
    t.pool_X = Matrix::matrix(n, dx);
    t.pool_Y = Matrix::matrix(n, dy);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed task header: ") + e.what());
  }
  for (Matrix* m : {&t.pool_X, &t.pool_Y}) {
    for (auto& v : m->values()) v = static_cast<double>(r.f32());
  }
  if (!r.done()) throw FormatError("trailing bytes after task payload");
  return t;
}

void save_task(const SampledTask& task, const std::string& path) { core::write_file_atomic(path, encode_task(task)); }

SampledTask load_task(const std::string& path) { return decode_task(core::read_file(path)); }

void validate_task(const SampledTask& task, double tol) {
  if (task.size() == 0) throw FormatError("task pool is empty");
  if (task.ref.size() != task.d_y()) throw FormatError("reference point has wrong length");
  for (std::size_t c = 0; c < task.d_y(); ++c) {
    double lo = task.pool_Y(0, c), hi = lo;
    for (std::size_t i = 1; i < task.size(); ++i) {
      lo = std::min(lo, task.pool_Y(i, c));
      hi = std::max(hi, task.pool_Y(i, c));
    }
    if (std::abs(lo + 1.0) > tol || std::abs(hi - 1.0) > tol) {
      throw FormatError("output column " + std::to_string(c) + " does not span [-1, 1]");
    }
    if (std::abs(task.ref[c] - lo) > tol) throw FormatError("reference point is not the column minimum");
  }
  for (double v : task.pool_X.values()) {
    if (!(v >= kDomainLo - tol && v <= kDomainHi + tol)) throw FormatError("pool input outside [-5, 5]");
  }
  if (task.d_y() <= 3) {
    std::vector<pareto::Point> ys;
    for (std::size_t i = 0; i < task.size(); ++i) ys.push_back(task.y(i));
    const double hv = pareto::hypervolume(pareto::pareto_front(ys), task.ref);
    if (!(task.hv_star > 0.0) || std::abs(hv - task.hv_star) > tol * std::max(1.0, hv)) {
      throw FormatError("hv_star does not match the pool front");
    }
    if (task.hv_star > std::pow(2.0, static_cast<double>(task.d_y())) + tol) throw FormatError("hv_star exceeds 2^d_y");
  }
}

}  // namespace tamo::taskgen
