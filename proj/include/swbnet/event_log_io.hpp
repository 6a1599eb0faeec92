#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "swbnet/error.hpp"
#include "swbnet/game.hpp"

// Event logs are JSON Lines: one compact object per line, the first key
// always "type" (HDR, EDG, DEC, PAY, SWB, REW, OUT). docs/event_log_format.md
// pins the exact layout.
namespace swbnet::io {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kLogVersion = 1;

inline const char* to_string(WealthAssignment w) { return w == WealthAssignment::Shuffled ? "shuffled" : "independent"; }

inline Condition parse_condition(const std::string& s) {
  if (s == "visible") return Condition::Visible;
  if (s == "invisible") return Condition::Invisible;
  throw ParseError("unknown condition '" + s + "'");
}

inline WealthAssignment parse_wealth_assignment(const std::string& s) {
  if (s == "shuffled") return WealthAssignment::Shuffled;
  if (s == "independent") return WealthAssignment::Independent;
  throw ParseError("unknown wealth assignment '" + s + "'");
}

inline Action parse_action(const std::string& s) {
  if (s == "C") return Action::Cooperate;
  if (s == "D") return Action::Defect;
  throw ParseError("unknown action '" + s + "'");
}

inline PairState parse_pair_state(const std::string& s) {
  if (s == "connected") return PairState::Connected;
  if (s == "unconnected") return PairState::Unconnected;
  throw ParseError("unknown pair state '" + s + "'");
}

inline TieDecision parse_tie_decision(const std::string& s) {
  for (auto d : {TieDecision::Keep, TieDecision::Cut, TieDecision::ProposeAccept, TieDecision::ProposeReject, TieDecision::NoTie})
    if (s == swbnet::to_string(d)) return d;
  throw ParseError("unknown tie decision '" + s + "'");
}

inline ordered_json config_to_json(const SessionConfig& c) {
  ordered_json j;
  j["n_players"] = c.n_players;
  j["rounds"] = c.rounds;
  j["initial_density"] = c.initial_density;
  j["rich_wealth"] = c.rich_wealth;
  j["poor_wealth"] = c.poor_wealth;
  j["rich_fraction"] = c.rich_fraction;
  j["wealth_assignment"] = to_string(c.wealth_assignment);
  j["cooperation_cost_per_edge"] = c.cooperation_cost_per_edge;
  j["cooperation_benefit_per_edge"] = c.cooperation_benefit_per_edge;
  j["rewiring_pair_probability"] = c.rewiring_pair_probability;
  j["points_per_usd"] = c.points_per_usd;
  j["condition"] = swbnet::to_string(c.condition);
  j["seed"] = c.seed;
  return j;
}

inline SessionConfig config_from_json(const ordered_json& j) {
  SessionConfig c;
  c.n_players = j.at("n_players").get<std::size_t>();
  c.rounds = j.at("rounds").get<int>();
  c.initial_density = j.at("initial_density").get<double>();
  c.rich_wealth = j.at("rich_wealth").get<Points>();
  c.poor_wealth = j.at("poor_wealth").get<Points>();
  c.rich_fraction = j.at("rich_fraction").get<double>();
  c.wealth_assignment = parse_wealth_assignment(j.at("wealth_assignment").get<std::string>());
  c.cooperation_cost_per_edge = j.at("cooperation_cost_per_edge").get<Points>();
  c.cooperation_benefit_per_edge = j.at("cooperation_benefit_per_edge").get<Points>();
  c.rewiring_pair_probability = j.at("rewiring_pair_probability").get<double>();
  c.points_per_usd = j.at("points_per_usd").get<Points>();
  c.condition = parse_condition(j.at("condition").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline ordered_json header_to_json(const LogHeader& h) {
  ordered_json j;
  j["type"] = "HDR";
  j["version"] = h.version;
  j["artifact"] = h.artifact;
  j["label"] = h.label;
  j["config"] = config_to_json(h.config);
  j["initial_wealth"] = h.initial_wealth;
  return j;
}

struct RecordWriter {
  ordered_json operator()(const DecisionRecord& r) const {
    return {{"type", "DEC"}, {"round", r.round}, {"player", r.player}, {"action", swbnet::to_string(r.action)}};
  }
  ordered_json operator()(const PayoffRecord& r) const {
    return {{"type", "PAY"}, {"round", r.round}, {"player", r.player}, {"delta", r.delta}, {"wealth", r.wealth}};
  }
  ordered_json operator()(const SwbRecord& r) const {
    return {{"type", "SWB"}, {"round", r.round}, {"player", r.player}, {"q1", r.rating.feeling}, {"q2", r.rating.presented}};
  }
  ordered_json operator()(const RewiringEvent& r) const {
    return {{"type", "REW"},
            {"round", r.round},
            {"u", r.u},
            {"v", r.v},
            {"decider", r.decider},
            {"pre", swbnet::to_string(r.pre_state)},
            {"decision", swbnet::to_string(r.decision)},
            {"decider_action", swbnet::to_string(r.decider_action)},
            {"partner_action", swbnet::to_string(r.partner_action)}};
  }
  ordered_json operator()(const EdgeSnapshot& r) const {
    ordered_json edges = ordered_json::array();
    for (const auto& e : r.edges()) edges.push_back({e.u, e.v});
    return {{"type", "EDG"}, {"round", r.round()}, {"edges", std::move(edges)}};
  }
  ordered_json operator()(const PayoutRecord& r) const {
    return {{"type", "OUT"}, {"player", r.player}, {"wealth", r.wealth}, {"usd", r.usd}};
  }
};

inline void write_log(std::ostream& out, const EventLog& log) {
  out << header_to_json(log.header).dump() << '\n';
  for (const auto& rec : log.records) out << std::visit(RecordWriter{}, rec).dump() << '\n';
}

inline std::string to_text(const EventLog& log) {
  std::ostringstream os;
  write_log(os, log);
  return os.str();
}

inline LogRecord record_from_json(const ordered_json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "DEC")
    return DecisionRecord{j.at("round").get<int>(), j.at("player").get<NodeId>(), parse_action(j.at("action").get<std::string>())};
  if (type == "PAY")
    return PayoffRecord{j.at("round").get<int>(), j.at("player").get<NodeId>(), j.at("delta").get<Points>(), j.at("wealth").get<Points>()};
  if (type == "SWB")
    return SwbRecord{j.at("round").get<int>(), j.at("player").get<NodeId>(), SwbRating{j.at("q1").get<int>(), j.at("q2").get<int>()}};
  if (type == "REW") {
    RewiringEvent e;
    e.round = j.at("round").get<int>();
    e.u = j.at("u").get<NodeId>();
    e.v = j.at("v").get<NodeId>();
    e.decider = j.at("decider").get<NodeId>();
    e.pre_state = parse_pair_state(j.at("pre").get<std::string>());
    e.decision = parse_tie_decision(j.at("decision").get<std::string>());
    e.decider_action = parse_action(j.at("decider_action").get<std::string>());
    e.partner_action = parse_action(j.at("partner_action").get<std::string>());
    if (!e.consistent()) throw ParseError("rewiring record is internally inconsistent");
    return e;
  }
  if (type == "EDG") {
    std::vector<Edge> edges;
    for (const auto& pair : j.at("edges")) {
      if (!pair.is_array() || pair.size() != 2) throw ParseError("edge entries must be [u, v] pairs");
      edges.emplace_back(pair[0].get<NodeId>(), pair[1].get<NodeId>());
    }
    return EdgeSnapshot(j.at("round").get<int>(), std::move(edges));
  }
  if (type == "OUT")
    return PayoutRecord{j.at("player").get<NodeId>(), j.at("wealth").get<Points>(), j.at("usd").get<double>()};
  throw ParseError("unknown record type '" + type + "'");
}

// Parses a whole log. Errors name the source, the 1-based line and the
// offending record text.
inline EventLog read_log(std::istream& in, const std::string& source = "<stream>") {
  EventLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  auto context = [&](const std::string& what) {
    std::string shown = line.size() > 120 ? line.substr(0, 120) + "..." : line;
    return ParseError(source + ":" + std::to_string(lineno) + ": " + what + " [record: " + shown + "]");
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw context("empty line");
    try {
      const auto j = ordered_json::parse(line);
      if (!j.is_object()) throw ParseError("record is not an object");
      if (!have_header) {
        if (j.at("type").get<std::string>() != "HDR") throw ParseError("first record must be HDR");
        log.header.version = j.at("version").get<int>();
        if (log.header.version != kLogVersion)
          throw ParseError("unsupported log version " + std::to_string(log.header.version));
        log.header.artifact = j.at("artifact").get<std::string>();
        log.header.label = j.at("label").get<std::string>();
        log.header.config = config_from_json(j.at("config"));
        log.header.initial_wealth = j.at("initial_wealth").get<std::vector<Points>>();
        have_header = true;
        continue;
      }
      log.records.push_back(record_from_json(j));
    } catch (const ParseError& e) {
      throw context(e.what());
    } catch (const nlohmann::json::exception& e) {
      throw context(e.what());
    } catch (const Error& e) {
      throw context(e.what());
    }
  }
  if (!have_header) throw ParseError(source + ": empty log (no HDR record)");
  return log;
}

inline EventLog parse_log(const std::string& text, const std::string& source = "<string>") {
  std::istringstream is(text);
  return read_log(is, source);
}

inline EventLog load_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event log " + path);
  return read_log(in, path);
}

inline void save_log(const std::string& path, const EventLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write event log " + path);
  write_log(out, log);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace swbnet::io
