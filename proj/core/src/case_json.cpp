#include <cmath>
#include <string>

#include <json.hpp>

#include "apfopf/error.hpp"
#include "apfopf/netmodel.hpp"

namespace apfopf {

namespace {

using nlohmann::json;

json bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_bound(const json& j, double missing) { return j.is_null() ? missing : j.get<double>(); }

BusKind kind_from(const std::string& s) {
  if (s == "PQ") return BusKind::PQ;
  if (s == "PV") return BusKind::PV;
  if (s == "REF") return BusKind::REF;
  if (s == "ISOLATED") return BusKind::ISOLATED;
  throw Error(ErrorCategory::Parse, "unknown bus kind '" + s + "'");
}

}  // namespace

std::string case_to_json(const NetworkCase& network) {
  json j;
  j["schema"] = "apfopf.case/1";
  j["name"] = network.name;
  j["base_mva"] = network.base_mva;
  json buses = json::array();
  for (const auto& b : network.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", std::string(to_string(b.kind))},
                     {"p_load", b.p_load},
                     {"q_load", b.q_load},
                     {"g_shunt", b.g_shunt},
                     {"b_shunt", b.b_shunt},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max},
                     {"v_init", b.v_init},
                     {"theta_init", b.theta_init},
                     {"base_kv", b.base_kv}});
  }
  json gens = json::array();
  for (const auto& g : network.gens) {
    gens.push_back({{"bus", g.bus},
                    {"p_init", g.p_init},
                    {"q_init", g.q_init},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"q_min", g.q_min},
                    {"q_max", g.q_max},
                    {"v_set", g.v_set},
                    {"in_service", g.in_service},
                    {"cost", {g.cost.c2, g.cost.c1, g.cost.c0}}});
  }
  json branches = json::array();
  for (const auto& br : network.branches) {
    branches.push_back({{"from", br.from},
                        {"to", br.to},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charge", br.b_charge},
                        {"rate_a", br.rate_a},
                        {"tap", br.tap},
                        {"shift", br.shift},
                        {"ang_min", bound(br.ang_min)},
                        {"ang_max", bound(br.ang_max)},
                        {"in_service", br.in_service}});
  }
  j["buses"] = std::move(buses);
  j["gens"] = std::move(gens);
  j["branches"] = std::move(branches);
  return j.dump(2);
}

NetworkCase case_from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Parse, std::string("invalid case JSON: ") + e.what());
  }
  try {
    NetworkCase net;
    net.name = j.at("name").get<std::string>();
    net.base_mva = j.at("base_mva").get<double>();
    for (const auto& b : j.at("buses")) {
      BusRecord r;
      r.id = b.at("id").get<int>();
      r.kind = kind_from(b.at("kind").get<std::string>());
      r.p_load = b.at("p_load").get<double>();
      r.q_load = b.at("q_load").get<double>();
      r.g_shunt = b.at("g_shunt").get<double>();
      r.b_shunt = b.at("b_shunt").get<double>();
      r.v_min = b.at("v_min").get<double>();
      r.v_max = b.at("v_max").get<double>();
      r.v_init = b.at("v_init").get<double>();
      r.theta_init = b.at("theta_init").get<double>();
      r.base_kv = b.value("base_kv", 0.0);
      net.buses.push_back(r);
    }
    for (const auto& g : j.at("gens")) {
      GenRecord r;
      r.bus = g.at("bus").get<int>();
      r.p_init = g.at("p_init").get<double>();
      r.q_init = g.at("q_init").get<double>();
      r.p_min = g.at("p_min").get<double>();
      r.p_max = g.at("p_max").get<double>();
      r.q_min = g.at("q_min").get<double>();
      r.q_max = g.at("q_max").get<double>();
      r.v_set = g.at("v_set").get<double>();
      r.in_service = g.at("in_service").get<bool>();
      const auto& c = g.at("cost");
      r.cost = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
      net.gens.push_back(r);
    }
    for (const auto& br : j.at("branches")) {
      BranchRecord r;
      r.from = br.at("from").get<int>();
      r.to = br.at("to").get<int>();
      r.r = br.at("r").get<double>();
      r.x = br.at("x").get<double>();
      r.b_charge = br.at("b_charge").get<double>();
      r.rate_a = br.at("rate_a").get<double>();
      r.tap = br.at("tap").get<double>();
      r.shift = br.at("shift").get<double>();
      r.ang_min = read_bound(br.at("ang_min"), -kInf);
      r.ang_max = read_bound(br.at("ang_max"), kInf);
      r.in_service = br.at("in_service").get<bool>();
      net.branches.push_back(r);
    }
    return net;
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Parse, std::string("malformed case JSON: ") + e.what());
  }
}

}  // namespace apfopf
