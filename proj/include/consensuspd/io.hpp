#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "consensuspd/algorithm.hpp"
#include "consensuspd/analysis.hpp"

#include <json.hpp>

namespace consensuspd {

// Shortest-round-trip decimal rendering; identical input bits give identical
// text, so emitted files are byte-stable under a fixed config and seed.
std::string format_double(double v);

// Writes via a temporary file in the same directory followed by a rename, so
// readers never observe partial output.
void atomic_write_file(const std::string& path, const std::string& content);

// Least-squares slope of log(dist) over the final half of the rows that have
// dist > 1e-12; the practical convergence-rate estimate.
struct RateFit {
  bool valid = false;
  double slope = 0;
  double r2 = 0;
  long points = 0;
};
RateFit fit_log_dist(const std::vector<TrajectoryRow>& rows);

std::string trajectory_csv(const TrajectoryRecord& record);
nlohmann::ordered_json summary_json(const TrajectoryRecord& record,
                                    const RateFit& fit, double gamma,
                                    bool gamma_auto, std::uint64_t seed);
nlohmann::ordered_json certificate_json(
    const ConstantsLedger& ledger,
    const std::vector<RateCertificate>& certs);

// Verbosity from the CONSENSUS_PD_LOG environment variable: 0 silent
// (default), 1 info, 2 debug. Messages go to stderr.
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace consensuspd
