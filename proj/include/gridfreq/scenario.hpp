#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridfreq/controllers.hpp"
#include "gridfreq/csv.hpp"
#include "gridfreq/dynamics.hpp"
#include "gridfreq/network.hpp"
#include "gridfreq/types.hpp"

namespace gridfreq {

using nlohmann::json;

/// Network and machine data parsed from the companion CSV. Bus ids in the
/// file are 1-based; everything in memory is 0-based.
struct NetworkData {
  int n_buses = 0;
  Vec voltage, inertia, damping, injection;
  std::vector<Line> lines;

  NetworkModel build_network() const { return NetworkModel(n_buses, lines, voltage); }
  MachineParams build_params() const { return {inertia, damping, injection}; }

  /// Buses with rotating inertia.
  std::vector<int> generator_buses() const {
    std::vector<int> g;
    for (int i = 0; i < n_buses; ++i)
      if (inertia(i) > 0.0) g.push_back(i);
    return g;
  }
};

/// Reads the two-table network CSV: a `bus,V_pu,M_pu,D_pu,P_star_pu` section
/// and a `from,to,b_pu` section, in either order.
inline NetworkData load_network_csv(const std::string& path) {
  const auto rows = read_csv(path);
  require(!rows.empty(), "network csv: empty file " + path);

  struct BusRow {
    int bus;
    double v, m, d, p;
  };
  std::vector<BusRow> buses;
  std::vector<std::array<double, 3>> lines;
  enum class Section { none, buses, lines } section = Section::none;

  auto parse_double = [&](const std::string& s, std::size_t line_no) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      require(used == s.size(), "");
      return v;
    } catch (...) {
      throw validation_error("network csv: bad number '" + s + "' at line " +
                             std::to_string(line_no + 1) + " of " + path);
    }
  };

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row[0] == "bus") {
      require(row.size() == 5 && row[1] == "V_pu" && row[2] == "M_pu" && row[3] == "D_pu" &&
                  row[4] == "P_star_pu",
              "network csv: bad bus header at line " + std::to_string(r + 1));
      section = Section::buses;
      continue;
    }
    if (row[0] == "from") {
      require(row.size() == 3 && row[1] == "to" && row[2] == "b_pu",
              "network csv: bad line header at line " + std::to_string(r + 1));
      section = Section::lines;
      continue;
    }
    require(section != Section::none, "network csv: data before any header in " + path);
    if (section == Section::buses) {
      require(row.size() == 5, "network csv: bus row needs 5 fields (line " +
                                   std::to_string(r + 1) + ")");
      buses.push_back({static_cast<int>(parse_double(row[0], r)), parse_double(row[1], r),
                       parse_double(row[2], r), parse_double(row[3], r),
                       parse_double(row[4], r)});
    } else {
      require(row.size() == 3, "network csv: line row needs 3 fields (line " +
                                   std::to_string(r + 1) + ")");
      lines.push_back({parse_double(row[0], r), parse_double(row[1], r), parse_double(row[2], r)});
    }
  }

  NetworkData data;
  data.n_buses = static_cast<int>(buses.size());
  require(data.n_buses >= 1, "network csv: no bus rows in " + path);
  data.voltage = Vec::Zero(data.n_buses);
  data.inertia = Vec::Zero(data.n_buses);
  data.damping = Vec::Zero(data.n_buses);
  data.injection = Vec::Zero(data.n_buses);
  std::vector<bool> seen(data.n_buses, false);
  for (const auto& b : buses) {
    require(b.bus >= 1 && b.bus <= data.n_buses,
            "network csv: bus ids must be 1.." + std::to_string(data.n_buses));
    require(!seen[b.bus - 1], "network csv: duplicate bus " + std::to_string(b.bus));
    seen[b.bus - 1] = true;
    data.voltage(b.bus - 1) = b.v;
    data.inertia(b.bus - 1) = b.m;
    data.damping(b.bus - 1) = b.d;
    data.injection(b.bus - 1) = b.p;
  }
  for (const auto& l : lines) {
    const int from = static_cast<int>(l[0]), to = static_cast<int>(l[1]);
    require(from >= 1 && from <= data.n_buses && to >= 1 && to <= data.n_buses,
            "network csv: line endpoint out of range");
    data.lines.push_back({from - 1, to - 1, l[2]});
  }
  return data;
}

struct NamedController {
  std::string name;
  ControllerSpec spec;
};

enum class InitialCondition { equilibrium, flat };

/// Fully expanded experiment description: network, machines, controllers,
/// noise, events and run settings, all in per-unit.
struct ScenarioSpec {
  std::string name;
  std::string network_csv;  // as referenced by the scenario file
  double base_mva = 1000.0;
  double base_hz = 60.0;

  NetworkData data;
  std::vector<NamedController> controllers;
  NoiseSpec noise;
  EventSchedule events;

  double horizon = 40.0;
  double dt = 1e-3;
  double record_dt = 1e-2;
  InitialCondition initial = InitialCondition::equilibrium;
  std::uint64_t seed = 1;
  int report_bus = 0;  // 0-based

  // Optional homogeneous block for H2 sweeps.
  struct H2Block {
    double m = 1, d = 1, tau = 1, k = 0, sigma_zeta = 1, sigma_eta = 1;
  };
  std::optional<H2Block> h2;

  // Optional tuning block (gain selection arithmetic + sweep settings).
  struct TuneBlock {
    double eps = 0.005;
    double worst_sum_p_star = 0.0;
    double sum_damping = 0.0;
    Vec cost_ratios;
    double gamma = 0.1;
    std::vector<double> k_grid;
    std::vector<double> tau_grid;
    int realizations = 100;
    double window_begin = 60.0, window_end = 80.0;
    double nominal_horizon = 600.0;  // noise-free settling run for the metrics
  };
  std::optional<TuneBlock> tune;

  double certify_rho = 0.1;

  void validate() const {
    require(!controllers.empty(), "scenario: needs at least one controller");
    require(horizon > 0 && dt > 0 && record_dt > 0, "scenario: times must be positive");
    const double steps = record_dt / dt;
    require(std::abs(steps - std::round(steps)) < 1e-9,
            "scenario: dt must divide record_dt");
    if (noise.active()) {
      const double k = noise.interval / dt;
      require(std::abs(k - std::round(k)) < 1e-9,
              "scenario: dt must divide the noise sample interval");
    }
    require(report_bus >= 0 && report_bus < data.n_buses, "scenario: report bus out of range");
  }
};

namespace detail {

inline std::vector<int> parse_bus_group(const json& j, const NetworkData& data,
                                        const std::string& ctx) {
  std::vector<int> buses;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "generators")
      buses = data.generator_buses();
    else if (s == "all")
      for (int i = 0; i < data.n_buses; ++i) buses.push_back(i);
    else
      throw validation_error(ctx + ": unknown bus group '" + s + "'");
  } else if (j.is_array()) {
    for (const auto& v : j) {
      const int b = v.get<int>();
      require(b >= 1 && b <= data.n_buses, ctx + ": bus id out of range");
      buses.push_back(b - 1);
    }
    std::sort(buses.begin(), buses.end());
  } else {
    throw validation_error(ctx + ": expected a bus group or array");
  }
  require(!buses.empty(), ctx + ": empty bus set");
  return buses;
}

/// Scalar or per-bus array, expanded over the actuated set.
inline Vec parse_per_bus(const json& j, int count, const std::string& ctx) {
  Vec v(count);
  if (j.is_number()) {
    v.setConstant(j.get<double>());
  } else if (j.is_array()) {
    require(static_cast<int>(j.size()) == count, ctx + ": array size must match the bus set");
    for (int i = 0; i < count; ++i) v(i) = j[i].get<double>();
  } else {
    throw validation_error(ctx + ": expected a number or array");
  }
  return v;
}

inline Mat ring_laplacian(int n, double weight) {
  Mat l = Mat::Zero(n, n);
  if (n == 1) return l;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    l(i, i) += weight;
    l(j, j) += weight;
    l(i, j) -= weight;
    l(j, i) -= weight;
  }
  return l;
}

inline Mat complete_laplacian(int n, double weight) {
  Mat l = Mat::Constant(n, n, -weight);
  for (int i = 0; i < n; ++i) l(i, i) = weight * (n - 1);
  return l;
}

inline ControllerSpec parse_controller(const json& j, const NetworkData& data) {
  const std::string type = j.at("type").get<std::string>();
  const std::string ctx = "controller '" + type + "'";
  std::vector<int> buses = parse_bus_group(j.value("buses", json("generators")), data, ctx);
  const int na = static_cast<int>(buses.size());

  if (type == "droop")
    return ControllerSpec::droop(buses, parse_per_bus(j.at("inverse_gain"), na, ctx));
  if (type == "pure_integral")
    return ControllerSpec::pure_integral(buses, parse_per_bus(j.at("time_constant"), na, ctx));
  if (type == "leaky_integral")
    return ControllerSpec::leaky(buses, parse_per_bus(j.at("gain_k"), na, ctx),
                                 parse_per_bus(j.at("time_constant"), na, ctx));
  if (type == "dai") {
    const json& comm = j.at("comm");
    const std::string topo = comm.at("topology").get<std::string>();
    const double w = comm.at("weight").get<double>();
    Mat l;
    if (topo == "ring")
      l = ring_laplacian(na, w);
    else if (topo == "complete")
      l = complete_laplacian(na, w);
    else
      throw validation_error(ctx + ": unknown communication topology '" + topo + "'");
    return ControllerSpec::dai(buses, parse_per_bus(j.at("time_constant"), na, ctx), l,
                               parse_per_bus(j.at("cost"), na, ctx));
  }
  throw validation_error("scenario: unknown controller type '" + type + "'");
}

inline json dump_controller(const NamedController& nc) {
  json j;
  j["name"] = nc.name;
  auto dump_vec = [](const Vec& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return json(out);
  };
  std::vector<int> buses1;
  for (int b : nc.spec.actuated) buses1.push_back(b + 1);
  j["buses"] = buses1;
  switch (nc.spec.kind) {
    case ControllerKind::droop:
      j["type"] = "droop";
      j["inverse_gain"] = dump_vec(nc.spec.droop_inverse_gain);
      break;
    case ControllerKind::pure_integral:
      j["type"] = "pure_integral";
      j["time_constant"] = dump_vec(nc.spec.time_constant);
      break;
    case ControllerKind::leaky_integral:
      j["type"] = "leaky_integral";
      j["time_constant"] = dump_vec(nc.spec.time_constant);
      j["gain_k"] = dump_vec(nc.spec.leak_gain);
      break;
    case ControllerKind::dai: {
      j["type"] = "dai";
      j["time_constant"] = dump_vec(nc.spec.time_constant);
      j["cost"] = dump_vec(nc.spec.cost_coeff);
      // Round-trippable explicit matrix.
      std::vector<std::vector<double>> rows;
      for (int r = 0; r < nc.spec.comm_laplacian.rows(); ++r) {
        std::vector<double> row;
        for (int c = 0; c < nc.spec.comm_laplacian.cols(); ++c)
          row.push_back(nc.spec.comm_laplacian(r, c));
        rows.push_back(row);
      }
      j["comm_matrix"] = rows;
      break;
    }
  }
  return j;
}

}  // namespace detail

/// Loads and validates a scenario file. Group shorthands ("generators",
/// scalar parameters) are expanded to per-bus vectors here, so downstream
/// code only ever sees concrete vectors.
inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw validation_error("scenario: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& e) {
    throw validation_error("scenario: JSON parse error in " + path + ": " + e.what());
  }

  try {
    ScenarioSpec s;
    s.name = j.value("name", std::filesystem::path(path).stem().string());
    s.network_csv = j.at("network").get<std::string>();
    s.base_mva = j.value("base_mva", 1000.0);
    s.base_hz = j.value("base_hz", 60.0);

    std::filesystem::path net_path(s.network_csv);
    if (net_path.is_relative())
      net_path = std::filesystem::path(path).parent_path() / net_path;
    require(std::filesystem::exists(net_path),
            "scenario: network file not found: " + net_path.string());
    s.network_csv = std::filesystem::absolute(net_path).lexically_normal().string();
    s.data = load_network_csv(net_path.string());

    if (j.contains("damping")) {
      const json& d = j["damping"];
      if (d.is_object()) {
        if (d.contains("generators"))
          for (int b : s.data.generator_buses()) s.data.damping(b) = d["generators"].get<double>();
        if (d.contains("loads"))
          for (int b = 0; b < s.data.n_buses; ++b)
            if (s.data.inertia(b) == 0.0) s.data.damping(b) = d["loads"].get<double>();
      } else {
        s.data.damping = detail::parse_per_bus(d, s.data.n_buses, "damping");
      }
    }

    for (const auto& cj : j.at("controllers")) {
      NamedController nc;
      nc.spec = cj.contains("comm_matrix")
                    ? [&] {
                        // Explicit matrix form written by save_scenario.
                        std::vector<int> buses =
                            detail::parse_bus_group(cj.at("buses"), s.data, "controller");
                        const int na = static_cast<int>(buses.size());
                        Mat l(na, na);
                        for (int r = 0; r < na; ++r)
                          for (int c = 0; c < na; ++c)
                            l(r, c) = cj["comm_matrix"][r][c].get<double>();
                        return ControllerSpec::dai(
                            buses, detail::parse_per_bus(cj.at("time_constant"), na, "dai"), l,
                            detail::parse_per_bus(cj.at("cost"), na, "dai"));
                      }()
                    : detail::parse_controller(cj, s.data);
      nc.name = cj.value("name", std::string(to_string(nc.spec.kind)));
      nc.spec.validate(s.data.n_buses);
      s.controllers.push_back(std::move(nc));
    }

    s.noise = NoiseSpec::none(s.data.n_buses);
    if (j.contains("noise")) {
      const json& nj = j["noise"];
      std::vector<int> nb = detail::parse_bus_group(nj.value("buses", json("all")), s.data,
                                                    "noise");
      auto scatter = [&](const json& val, Vec& target, const std::string& ctx) {
        const Vec v = detail::parse_per_bus(val, static_cast<int>(nb.size()), ctx);
        for (std::size_t i = 0; i < nb.size(); ++i) target(nb[i]) = v(i);
      };
      if (nj.contains("bias_pu")) scatter(nj["bias_pu"], s.noise.bias_mean, "noise bias");
      if (nj.contains("half_width_pu"))
        scatter(nj["half_width_pu"], s.noise.half_width, "noise half width");
      if (nj.contains("sigma_zeta_pu"))
        scatter(nj["sigma_zeta_pu"], s.noise.sigma_zeta, "noise sigma_zeta");
      if (nj.contains("sigma_eta_pu"))
        scatter(nj["sigma_eta_pu"], s.noise.sigma_eta, "noise sigma_eta");
      s.noise.zero_mean = nj.value("zero_mean", false);
      s.noise.interval = nj.value("interval", 1.0);
      s.noise.seed = nj.value("seed", std::uint64_t(0));
    }

    if (j.contains("events"))
      for (const auto& ej : j["events"]) {
        Event e;
        e.time = ej.at("time").get<double>();
        e.bus = ej.at("bus").get<int>() - 1;
        e.delta_p = ej.at("delta_p_pu").get<double>();
        s.events.events.push_back(e);
      }

    if (j.contains("sim")) {
      const json& sj = j["sim"];
      s.horizon = sj.value("horizon", s.horizon);
      s.dt = sj.value("dt", s.dt);
      s.record_dt = sj.value("record_dt", s.record_dt);
      s.seed = sj.value("seed", s.seed);
      const std::string init = sj.value("initial", "equilibrium");
      if (init == "equilibrium")
        s.initial = InitialCondition::equilibrium;
      else if (init == "flat")
        s.initial = InitialCondition::flat;
      else
        throw validation_error("scenario: initial must be 'equilibrium' or 'flat'");
      if (sj.contains("report_bus")) s.report_bus = sj["report_bus"].get<int>() - 1;
    }

    if (j.contains("h2")) {
      const json& hj = j["h2"];
      ScenarioSpec::H2Block h;
      h.m = hj.at("m").get<double>();
      h.d = hj.at("d").get<double>();
      h.tau = hj.at("tau").get<double>();
      h.k = hj.value("k", 0.0);
      h.sigma_zeta = hj.at("sigma_zeta").get<double>();
      h.sigma_eta = hj.at("sigma_eta").get<double>();
      s.h2 = h;
    }

    if (j.contains("tune")) {
      const json& tj = j["tune"];
      ScenarioSpec::TuneBlock t;
      t.eps = tj.at("eps_pu").get<double>();
      t.worst_sum_p_star = tj.at("worst_sum_p_star_pu").get<double>();
      t.sum_damping = tj.at("sum_damping_pu").get<double>();
      t.cost_ratios = detail::parse_per_bus(tj.at("cost_ratios"),
                                            static_cast<int>(tj.at("cost_ratios").size()),
                                            "tune cost ratios");
      t.gamma = tj.value("gamma", 0.1);
      if (tj.contains("k_grid")) t.k_grid = tj["k_grid"].get<std::vector<double>>();
      if (tj.contains("tau_grid")) t.tau_grid = tj["tau_grid"].get<std::vector<double>>();
      t.realizations = tj.value("realizations", 100);
      t.window_begin = tj.value("window_begin", 60.0);
      t.window_end = tj.value("window_end", 80.0);
      t.nominal_horizon = tj.value("nominal_horizon", 600.0);
      s.tune = t;
    }

    if (j.contains("certify")) s.certify_rho = j["certify"].value("rho", 0.1);

    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw validation_error("scenario: schema violation in " + path + ": " + e.what());
  }
}

/// Writes a scenario back with every shorthand expanded. Reloading the
/// result reproduces the scenario field-by-field.
inline void save_scenario(const ScenarioSpec& s, const std::string& path) {
  json j;
  j["name"] = s.name;
  std::filesystem::path net_path(s.network_csv);
  j["network"] = net_path.string();
  j["base_mva"] = s.base_mva;
  j["base_hz"] = s.base_hz;
  std::vector<double> damping(s.data.damping.data(), s.data.damping.data() + s.data.n_buses);
  j["damping"] = damping;

  j["controllers"] = json::array();
  for (const auto& nc : s.controllers) j["controllers"].push_back(detail::dump_controller(nc));

  auto dump_vec = [](const Vec& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
  };
  j["noise"] = {{"buses", "all"},
                {"bias_pu", dump_vec(s.noise.bias_mean)},
                {"half_width_pu", dump_vec(s.noise.half_width)},
                {"sigma_zeta_pu", dump_vec(s.noise.sigma_zeta)},
                {"sigma_eta_pu", dump_vec(s.noise.sigma_eta)},
                {"zero_mean", s.noise.zero_mean},
                {"interval", s.noise.interval},
                {"seed", s.noise.seed}};

  j["events"] = json::array();
  for (const Event& e : s.events.events)
    j["events"].push_back({{"time", e.time}, {"bus", e.bus + 1}, {"delta_p_pu", e.delta_p}});

  j["sim"] = {{"horizon", s.horizon},
              {"dt", s.dt},
              {"record_dt", s.record_dt},
              {"seed", s.seed},
              {"initial", s.initial == InitialCondition::equilibrium ? "equilibrium" : "flat"},
              {"report_bus", s.report_bus + 1}};

  if (s.h2)
    j["h2"] = {{"m", s.h2->m},       {"d", s.h2->d },
               {"tau", s.h2->tau},   {"k", s.h2->k},
               {"sigma_zeta", s.h2->sigma_zeta}, {"sigma_eta", s.h2->sigma_eta}};
  if (s.tune)
    j["tune"] = {{"eps_pu", s.tune->eps},
                 {"worst_sum_p_star_pu", s.tune->worst_sum_p_star},
                 {"sum_damping_pu", s.tune->sum_damping},
                 {"cost_ratios", dump_vec(s.tune->cost_ratios)},
                 {"gamma", s.tune->gamma},
                 {"k_grid", s.tune->k_grid},
                 {"tau_grid", s.tune->tau_grid},
                 {"realizations", s.tune->realizations},
                 {"window_begin", s.tune->window_begin},
                 {"window_end", s.tune->window_end},
                 {"nominal_horizon", s.tune->nominal_horizon}};
  j["certify"] = {{"rho", s.certify_rho}};

  std::ofstream f(path);
  if (!f) throw validation_error("scenario: cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace gridfreq
