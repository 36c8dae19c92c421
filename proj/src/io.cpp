#include "consensuspd/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <system_error>

#include "consensuspd/errors.hpp"

#include <json.hpp>

namespace consensuspd {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// Finite doubles pass through; NaN/inf become JSON null (the certificate's c
// can overflow; its logarithm is emitted alongside and is always finite).
json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec)
      throw ConfigError("cannot create directory '" +
                        target.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.good())
      throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw ConfigError("cannot move '" + tmp.string() + "' into place: " +
                      ec.message());
}

RateFit fit_log_dist(const std::vector<TrajectoryRow>& rows) {
  RateFit fit;
  if (rows.empty()) return fit;
  const long t_last = rows.back().t;
  const long t_from = t_last / 2;
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : rows)
    if (row.t >= t_from && std::isfinite(row.dist) && row.dist > 1e-12)
      pts.emplace_back(static_cast<double>(row.t), std::log(row.dist));
  fit.points = static_cast<long>(pts.size());
  if (pts.size() < 3) return fit;
  double sx = 0, sy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double mx = sx / pts.size(), my = sy / pts.size();
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx <= 0) return fit;
  fit.slope = sxy / sxx;
  const double ssr = syy - fit.slope * sxy;  // residual sum of squares
  fit.r2 = (syy > 0) ? 1.0 - ssr / syy : 1.0;
  fit.valid = true;
  return fit;
}

std::string trajectory_csv(const TrajectoryRecord& record) {
  std::string out;
  out.reserve(64 * record.rows.size() + 128);
  out += "t, dist, x_perp_norm, kkt_stationarity, kkt_primal, kkt_comp, "
         "z_sum, V, V_opt, V_net\n";
  for (const auto& row : record.rows) {
    out += std::to_string(row.t);
    out += ',';
    if (std::isfinite(row.dist)) out += format_double(row.dist);
    out += ',';
    out += format_double(row.x_perp_norm);
    out += ',';
    out += format_double(row.kkt_stationarity);
    out += ',';
    out += format_double(row.kkt_primal);
    out += ',';
    out += format_double(row.kkt_comp);
    out += ',';
    out += format_double(row.z_sum);
    out += ',';
    if (row.V) out += format_double(*row.V);
    out += ',';
    if (row.V_opt) out += format_double(*row.V_opt);
    out += ',';
    if (row.V_net) out += format_double(*row.V_net);
    out += '\n';
  }
  return out;
}

ordered_json summary_json(const TrajectoryRecord& record, const RateFit& fit,
                          double gamma, bool gamma_auto, std::uint64_t seed) {
  ordered_json j;
  j["schema"] = 1;
  ordered_json fs;
  fs["t"] = record.final_state.t;
  fs["x"] = vector_to_json(record.final_state.x);
  fs["z"] = vector_to_json(record.final_state.z);
  fs["lambda"] = vector_to_json(record.final_state.lambda);
  j["final_state"] = std::move(fs);
  j["iterations"] = record.iterations;
  j["stop_reason"] = record.stop_reason;
  j["final_dist"] = finite_or_null(record.final_dist);
  j["gamma"] = gamma;
  j["gamma_auto"] = gamma_auto;
  j["seed"] = seed;
  ordered_json jf;
  jf["valid"] = fit.valid;
  jf["slope"] = fit.slope;
  jf["r2"] = fit.r2;
  jf["points"] = fit.points;
  j["fitted_rate"] = std::move(jf);
  return j;
}

ordered_json certificate_json(const ConstantsLedger& L,
                              const std::vector<RateCertificate>& certs) {
  ordered_json j;
  j["schema"] = 1;
  j["n"] = L.n;
  j["m"] = L.m;
  j["m_a"] = L.m_a;
  j["kappa0"] = L.kappa0;
  j["kappa1"] = L.kappa1;
  j["kappa"] = L.kappa;
  j["k0"] = L.k0;
  j["k1"] = L.k1;
  j["k2"] = L.k2;
  j["k3"] = L.k3;
  j["k4"] = L.k4;
  j["k5"] = L.k5;
  j["k6"] = L.k6;
  j["k7"] = L.k7;
  j["q0"] = L.q0;
  j["mu_f"] = L.mu_f;
  j["h"] = L.h;
  j["eps"] = L.eps;
  j["M"] = L.M;
  j["beta"] = L.beta;
  j["alpha1"] = L.alpha1;
  j["alpha2"] = L.alpha2;
  j["alpha3"] = L.alpha3;
  j["alpha4"] = L.alpha4;
  // alpha5 and alpha6 do not exist in the constant family; the numbering
  // gap is deliberate and preserved.
  j["alpha7"] = L.alpha7;
  j["alpha8"] = L.alpha8;
  j["alpha9"] = L.alpha9;
  j["alpha10"] = L.alpha10;
  j["alpha11"] = L.alpha11;
  j["delta1"] = L.delta1;
  j["delta2"] = L.delta2;
  for (int i = 0; i < 20; ++i)
    j["gammabar" + std::to_string(i + 1)] = finite_or_null(L.gammabar[i]);
  j["gammabar0"] = L.gammabar0;
  j["c_l"] = L.c_l;
  j["c_u"] = L.c_u;
  ordered_json flags;
  flags["h_convention"] = L.h_convention;
  flags["q0_convention"] = L.q0_convention;
  flags["delta2_zero_branch"] = L.delta2_zero_branch;
  flags["lyapunov_convention"] = L.lyapunov_convention;
  flags["sampled_constants"] = L.sampled_constants;
  j["flags"] = std::move(flags);
  j["theta_star"] = L.theta_star;
  j["lambda_star"] = vector_to_json(L.lambda_star);
  ordered_json rates = json::array();
  for (const auto& c : certs) {
    ordered_json r;
    r["gamma"] = c.gamma;
    r["omega"] = c.omega;
    r["eta2"] = c.eta2;
    r["T"] = finite_or_null(c.T);
    r["mu"] = c.mu;
    r["c"] = finite_or_null(c.c);
    r["log_c"] = c.log_c;
    r["log_mu"] = c.log_mu;
    rates.push_back(std::move(r));
  }
  j["rates"] = std::move(rates);
  return j;
}

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("CONSENSUS_PD_LOG");
    if (!env) return 0;
    return std::atoi(env);
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace consensuspd
