#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "algcp/grid.hpp"

namespace algcp {

enum class FacilityType { hospital, health_center, health_post, chw };

inline std::string to_string(FacilityType t) {
  switch (t) {
    case FacilityType::hospital: return "hospital";
    case FacilityType::health_center: return "health_center";
    case FacilityType::health_post: return "health_post";
    case FacilityType::chw: return "chw";
  }
  return "?";
}

inline FacilityType facility_type_from(const std::string& s) {
  if (s == "hospital") return FacilityType::hospital;
  if (s == "health_center") return FacilityType::health_center;
  if (s == "health_post") return FacilityType::health_post;
  if (s == "chw") return FacilityType::chw;
  fail("unknown_class", "unknown facility type '" + s + "'");
}

struct Facility {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  FacilityType type = FacilityType::health_center;
  int first_active_month = 0;
  std::vector<std::uint8_t> reporting;  // one flag per study month
};

/// Facilities and CHWs with activation periods and monthly reporting flags.
struct FacilityRegistry {
  std::vector<Facility> facilities;
  int n_months = 0;

  std::size_t size() const { return facilities.size(); }

  bool active_at(std::size_t j, int month) const {
    return month >= facilities[j].first_active_month;
  }
  bool reporting_at(std::size_t j, int month) const {
    if (!active_at(j, month)) return false;
    const auto& rep = facilities[j].reporting;
    if (month < 0 || static_cast<std::size_t>(month) >= rep.size()) return false;
    return rep[static_cast<std::size_t>(month)] != 0;
  }
  bool is_chw(std::size_t j) const { return facilities[j].type == FacilityType::chw; }

  std::size_t cell_of(std::size_t j, const GridSpec& spec) const {
    return spec.cell_of_point(facilities[j].lon, facilities[j].lat,
                              "facility " + facilities[j].id);
  }

  std::vector<std::size_t> active_indices(int month, bool include_chws) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < facilities.size(); ++j) {
      if (!active_at(j, month)) continue;
      if (!include_chws && is_chw(j)) continue;
      out.push_back(j);
    }
    return out;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& f : facilities) {
      require(seen.insert(f.id).second, "duplicate_id", "duplicate facility id " + f.id);
      require(static_cast<int>(f.reporting.size()) == n_months, "bad_registry",
              "facility " + f.id + " has a reporting bitmap of the wrong length");
      for (int m = 0; m < f.first_active_month && m < n_months; ++m) {
        require(f.reporting[static_cast<std::size_t>(m)] == 0, "bad_registry",
                "facility " + f.id + " reports before its activation month");
      }
    }
  }
};

/// Registry CSV columns: id, lon, lat, type, first_active_month, reporting
/// bitmap as one '0'/'1' character per study month.
inline FacilityRegistry load_registry_csv(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "parse_error", path + " is empty");
  FacilityRegistry reg;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    require(f.size() >= 6, "parse_error", path + ": expected 6 columns, got line '" + line + "'");
    Facility fac;
    fac.id = trim(f[0]);
    fac.lon = std::stod(f[1]);
    fac.lat = std::stod(f[2]);
    fac.type = facility_type_from(trim(f[3]));
    fac.first_active_month = std::stoi(f[4]);
    const std::string bits = trim(f[5]);
    fac.reporting.reserve(bits.size());
    for (char c : bits) {
      require(c == '0' || c == '1', "parse_error", path + ": reporting bitmap must be 0/1");
      fac.reporting.push_back(c == '1' ? 1 : 0);
    }
    reg.facilities.push_back(std::move(fac));
  }
  require(!reg.facilities.empty(), "parse_error", path + " lists no facilities");
  reg.n_months = static_cast<int>(reg.facilities.front().reporting.size());
  reg.validate();
  return reg;
}

inline void save_registry_csv(const std::string& path, const FacilityRegistry& reg) {
  std::ostringstream out;
  out << "id,lon,lat,type,first_active_month,reporting\n";
  char buf[32];
  for (const auto& f : reg.facilities) {
    out << f.id << ',';
    std::snprintf(buf, sizeof buf, "%.17g", f.lon);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", f.lat);
    out << buf << ',' << to_string(f.type) << ',' << f.first_active_month << ',';
    for (auto b : f.reporting) out << (b ? '1' : '0');
    out << '\n';
  }
  write_file_text(path, out.str());
}

}  // namespace algcp
