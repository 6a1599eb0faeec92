#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "swbnet/agents.hpp"
#include "swbnet/error.hpp"
#include "swbnet/event_log_io.hpp"
#include "swbnet/game.hpp"
#include "swbnet/metrics.hpp"
#include "swbnet/statlab.hpp"

namespace swbnet::harness {

namespace fs = std::filesystem;

enum class ConditionSet : std::uint8_t { Both, Visible, Invisible };

struct RunConfig {
  SessionConfig session;  // `seed` is the master seed; `condition` is set per session
  int replicates_per_condition = 25;
  ConditionSet conditions = ConditionSet::Both;
  AgentPolicy policy;
  std::optional<std::uint64_t> louvain_seed;  // defaults to the master seed
  std::string output_directory = "run";
  int permutation_iterations = 10000;
  int bootstrap_resamples = 2000;

  std::uint64_t master_seed() const { return session.seed; }
  std::uint64_t louvain_master() const { return louvain_seed.value_or(session.seed); }

  void validate() const {
    SessionConfig probe = session;
    probe.validate();
    policy.validate();
    if (replicates_per_condition < 1) throw InvalidConfig("replicates_per_condition must be at least 1");
    if (permutation_iterations < 1000) throw InvalidConfig("permutation_iterations must be at least 1000");
    if (bootstrap_resamples < 1000) throw InvalidConfig("bootstrap_resamples must be at least 1000");
  }

  std::vector<Condition> condition_list() const {
    switch (conditions) {
      case ConditionSet::Visible: return {Condition::Visible};
      case ConditionSet::Invisible: return {Condition::Invisible};
      case ConditionSet::Both: break;
    }
    return {Condition::Visible, Condition::Invisible};
  }
};

// ---------------------------------------------------------------------------
// Flat key = value config format

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InvalidConfig("config field '" + key + "': cannot parse '" + text + "'");
  return value;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// 10 significant digits; all report CSVs go through here.
inline std::string fmt10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt10(const std::optional<double>& v) { return v ? fmt10(*v) : std::string(); }

inline const char* cell_name(Action decider, Action partner) {
  if (decider == Action::Cooperate) return partner == Action::Cooperate ? "CC" : "CD";
  return partner == Action::Cooperate ? "DC" : "DD";
}

inline PolicyKind parse_policy(const std::string& s) {
  for (auto k : {PolicyKind::CalibratedBernoulli, PolicyKind::ConditionalCooperator, PolicyKind::AlwaysCooperate,
                 PolicyKind::AlwaysDefect})
    if (s == to_string(k)) return k;
  throw InvalidConfig("config field 'policy': unknown policy '" + s + "' (calibrated|conditional|always_c|always_d)");
}

inline ConditionSet parse_condition_set(const std::string& s) {
  if (s == "both") return ConditionSet::Both;
  if (s == "visible") return ConditionSet::Visible;
  if (s == "invisible") return ConditionSet::Invisible;
  throw InvalidConfig("config field 'condition': expected visible|invisible|both, got '" + s + "'");
}

inline const char* to_string(ConditionSet c) {
  switch (c) {
    case ConditionSet::Both: return "both";
    case ConditionSet::Visible: return "visible";
    case ConditionSet::Invisible: return "invisible";
  }
  return "both";
}

}  // namespace detail

// Applies one key = value setting. Unknown keys are an error naming the key.
inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
  using detail::parse_number;
  auto& s = rc.session;
  auto& t = rc.policy.table;
  try {
    if (key == "n_players") s.n_players = parse_number<std::size_t>(key, value);
    else if (key == "rounds") s.rounds = parse_number<int>(key, value);
    else if (key == "initial_density") s.initial_density = parse_number<double>(key, value);
    else if (key == "rich_wealth") s.rich_wealth = parse_number<Points>(key, value);
    else if (key == "poor_wealth") s.poor_wealth = parse_number<Points>(key, value);
    else if (key == "rich_fraction") s.rich_fraction = parse_number<double>(key, value);
    else if (key == "wealth_assignment") s.wealth_assignment = io::parse_wealth_assignment(value);
    else if (key == "cooperation_cost_per_edge") s.cooperation_cost_per_edge = parse_number<Points>(key, value);
    else if (key == "cooperation_benefit_per_edge") s.cooperation_benefit_per_edge = parse_number<Points>(key, value);
    else if (key == "rewiring_pair_probability") s.rewiring_pair_probability = parse_number<double>(key, value);
    else if (key == "points_per_usd") s.points_per_usd = parse_number<Points>(key, value);
    else if (key == "seed") s.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "replicates_per_condition") rc.replicates_per_condition = parse_number<int>(key, value);
    else if (key == "condition") rc.conditions = detail::parse_condition_set(value);
    else if (key == "louvain_seed") rc.louvain_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "output_directory") rc.output_directory = value;
    else if (key == "permutation_iterations") rc.permutation_iterations = parse_number<int>(key, value);
    else if (key == "bootstrap_resamples") rc.bootstrap_resamples = parse_number<int>(key, value);
    else if (key == "policy") rc.policy.kind = detail::parse_policy(value);
    else if (key == "conditional_alpha") rc.policy.conditional_alpha = parse_number<double>(key, value);
    else if (key == "conditional_beta") rc.policy.conditional_beta = parse_number<double>(key, value);
    else if (key == "emoji_tie_sensitivity") rc.policy.emoji_tie_sensitivity = parse_number<double>(key, value);
    else if (key == "swb_mapping") {
      std::stringstream ss(value);
      std::string item;
      std::size_t i = 0;
      while (std::getline(ss, item, ',')) {
        if (i >= 5) throw InvalidConfig("config field 'swb_mapping': expected 5 comma-separated levels");
        rc.policy.swb_mapping[i++] = parse_number<int>(key, detail::trim(item));
      }
      if (i != 5) throw InvalidConfig("config field 'swb_mapping': expected 5 comma-separated levels");
    } else if (key.rfind("connect.", 0) == 0 || key.rfind("coop_rate.", 0) == 0) {
      const auto first_dot = key.find('.');
      const auto second_dot = key.find('.', first_dot + 1);
      const std::string cond_name = key.substr(first_dot + 1, second_dot == std::string::npos ? std::string::npos : second_dot - first_dot - 1);
      Condition cond;
      try {
        cond = io::parse_condition(cond_name);
      } catch (const ParseError&) {
        throw InvalidConfig("config field '" + key + "': unknown condition");
      }
      const double p = parse_number<double>(key, value);
      if (key.rfind("coop_rate.", 0) == 0) {
        if (second_dot != std::string::npos) throw InvalidConfig("unknown config field '" + key + "'");
        t.cooperation_rate(cond) = p;
      } else {
        const std::string cell = second_dot == std::string::npos ? "" : key.substr(second_dot + 1);
        if (cell.size() != 2 || (cell[0] != 'C' && cell[0] != 'D') || (cell[1] != 'C' && cell[1] != 'D'))
          throw InvalidConfig("config field '" + key + "': cell must be CC, CD, DC or DD");
        t.connect_prob(cond, cell[0] == 'C' ? Action::Cooperate : Action::Defect,
                       cell[1] == 'C' ? Action::Cooperate : Action::Defect) = p;
      }
    } else {
      throw InvalidConfig("unknown config field '" + key + "'");
    }
  } catch (const ParseError& e) {
    throw InvalidConfig("config field '" + key + "': " + e.what());
  }
}

struct KeyValueLine {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

inline std::vector<KeyValueLine> read_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValueLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out.push_back({lineno, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))});
  }
  return out;
}

inline RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig rc;
  for (const auto& kv : read_key_values(in, source)) {
    try {
      apply_setting(rc, kv.key, kv.value);
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(source + ":" + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_run_config(in, path);
}

// Every field, one per line, in a fixed order; parse_run_config reads it back.
inline std::string format_run_config(const RunConfig& rc) {
  using detail::format_double;
  const auto& s = rc.session;
  const auto& t = rc.policy.table;
  std::ostringstream os;
  os << "n_players = " << s.n_players << '\n'
     << "rounds = " << s.rounds << '\n'
     << "initial_density = " << format_double(s.initial_density) << '\n'
     << "rich_wealth = " << s.rich_wealth << '\n'
     << "poor_wealth = " << s.poor_wealth << '\n'
     << "rich_fraction = " << format_double(s.rich_fraction) << '\n'
     << "wealth_assignment = " << io::to_string(s.wealth_assignment) << '\n'
     << "cooperation_cost_per_edge = " << s.cooperation_cost_per_edge << '\n'
     << "cooperation_benefit_per_edge = " << s.cooperation_benefit_per_edge << '\n'
     << "rewiring_pair_probability = " << format_double(s.rewiring_pair_probability) << '\n'
     << "points_per_usd = " << s.points_per_usd << '\n'
     << "seed = " << s.seed << '\n'
     << "replicates_per_condition = " << rc.replicates_per_condition << '\n'
     << "condition = " << detail::to_string(rc.conditions) << '\n'
     << "louvain_seed = " << rc.louvain_master() << '\n'
     << "output_directory = " << rc.output_directory << '\n'
     << "permutation_iterations = " << rc.permutation_iterations << '\n'
     << "bootstrap_resamples = " << rc.bootstrap_resamples << '\n'
     << "policy = " << to_string(rc.policy.kind) << '\n'
     << "swb_mapping = " << rc.policy.swb_mapping[0] << ',' << rc.policy.swb_mapping[1] << ','
     << rc.policy.swb_mapping[2] << ',' << rc.policy.swb_mapping[3] << ',' << rc.policy.swb_mapping[4] << '\n'
     << "conditional_alpha = " << format_double(rc.policy.conditional_alpha) << '\n'
     << "conditional_beta = " << format_double(rc.policy.conditional_beta) << '\n'
     << "emoji_tie_sensitivity = " << format_double(rc.policy.emoji_tie_sensitivity) << '\n';
  for (auto cond : {Condition::Invisible, Condition::Visible}) {
    for (auto d : {Action::Cooperate, Action::Defect})
      for (auto p : {Action::Cooperate, Action::Defect})
        os << "connect." << to_string(cond) << '.' << detail::cell_name(d, p) << " = "
           << format_double(t.connect_prob(cond, d, p)) << '\n';
    os << "coop_rate." << to_string(cond) << " = " << format_double(t.cooperation_rate(cond)) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Sessions and the manifest

struct SessionEntry {
  Condition condition = Condition::Visible;
  int replicate = 0;
  std::string file;

  std::string label() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_r%04d", to_string(condition), replicate);
    return buf;
  }
};

inline std::uint64_t session_seed(std::uint64_t master, Condition c, int replicate) {
  return derive_seed(master, to_string(c), static_cast<std::uint64_t>(replicate));
}

inline std::uint64_t louvain_seed_for(std::uint64_t louvain_master, const std::string& network, int round) {
  return derive_seed(louvain_master, "louvain", hash_tag(network), static_cast<std::uint64_t>(round));
}

struct Manifest {
  RunConfig config;
  std::vector<SessionEntry> sessions;
};

inline Manifest read_manifest(const fs::path& run_dir) {
  const auto path = run_dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  for (const auto& kv : read_key_values(in, path.string())) {
    if (kv.key == "artifact" || kv.key == "created") continue;
    if (kv.key == "session") {
      std::istringstream ss(kv.value);
      std::string cond, file;
      int rep = -1;
      ss >> cond >> rep >> file;
      if (!ss || rep < 0 || file.empty())
        throw ParseError(path.string() + ":" + std::to_string(kv.line) + ": malformed session entry");
      m.sessions.push_back({io::parse_condition(cond), rep, file});
      continue;
    }
    try {
      apply_setting(m.config, kv.key, kv.value);
    } catch (const InvalidConfig& e) {
      throw ParseError(path.string() + ":" + std::to_string(kv.line) + ": " + e.what());
    }
  }
  if (m.sessions.empty()) throw ParseError(path.string() + ": manifest lists no sessions");
  return m;
}

namespace detail {

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions are
// rethrown for the lowest failing index, so failures are jobs-invariant.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

// Runs every (condition, replicate) session and writes one event log per
// session plus manifest.txt. Outputs depend only on the config, never on jobs.
inline fs::path simulate(const RunConfig& rc, int jobs = 1) {
  rc.validate();
  const fs::path dir = rc.output_directory;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<SessionEntry> sessions;
  for (auto cond : rc.condition_list())
    for (int r = 0; r < rc.replicates_per_condition; ++r) {
      SessionEntry e{cond, r, {}};
      e.file = e.label() + ".jsonl";
      sessions.push_back(e);
    }

  detail::parallel_for(sessions.size(), jobs, [&](std::size_t i) {
    const auto& e = sessions[i];
    SessionConfig sc = rc.session;
    sc.condition = e.condition;
    sc.seed = session_seed(rc.master_seed(), e.condition, e.replicate);
    io::save_log((dir / e.file).string(), run_session(sc, rc.policy, e.label()));
  });

  std::ostringstream manifest;
  manifest << "# swbnet run manifest\n"
           << "artifact = " << kArtifactVersion << '\n'
           << "created = " << detail::timestamp() << '\n'
           << format_run_config(rc);
  for (const auto& e : sessions)
    manifest << "session = " << to_string(e.condition) << ' ' << e.replicate << ' ' << e.file << '\n';
  detail::write_text(dir / "manifest.txt", manifest.str());
  return dir;
}

// ---------------------------------------------------------------------------
// Analysis

struct RoundMetrics {
  int round = 0;
  double cooperation_rate = 0.0;
  double mean_degree = 0.0;
  double mean_wealth = 0.0;
  double mean_q1 = 0.0;
  double mean_q2 = 0.0;
  double community_count = 0.0;
  double transitivity = 0.0;
  std::optional<double> gini;
  std::optional<double> coop_centrality;
  std::optional<double> defect_centrality;
  double coop_triangle_fraction = 0.0;
  std::uint64_t louvain_seed = 0;
};

// Tie choices per (condition, decider action, partner action). `decider`
// counts the first choice of every selected pair; `acceptor` counts the
// answers to proposals (own action, proposer action).
struct TieCell {
  long connects = 0;
  long total = 0;
};

struct TieCounts {
  // [role][condition][own action][other action]
  TieCell cells[2][2][2][2];

  TieCell& at(int role, Condition c, Action own, Action other) {
    return cells[role][static_cast<int>(c)][static_cast<int>(own)][static_cast<int>(other)];
  }
  const TieCell& at(int role, Condition c, Action own, Action other) const {
    return cells[role][static_cast<int>(c)][static_cast<int>(own)][static_cast<int>(other)];
  }
  TieCell pooled(Condition c, Action own, Action other) const {
    TieCell p = at(0, c, own, other);
    p.connects += at(1, c, own, other).connects;
    p.total += at(1, c, own, other).total;
    return p;
  }
  void merge(const TieCounts& o) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            cells[r][c][a][b].connects += o.cells[r][c][a][b].connects;
            cells[r][c][a][b].total += o.cells[r][c][a][b].total;
          }
  }
};

inline void count_ties(const EventLog& log, TieCounts& counts) {
  const Condition cond = log.header.config.condition;
  for (const auto& rec : log.records) {
    const auto* ev = std::get_if<RewiringEvent>(&rec);
    if (!ev) continue;
    auto& first = counts.at(0, cond, ev->decider_action, ev->partner_action);
    ++first.total;
    if (ev->decider_connects()) ++first.connects;
    if (ev->decision == TieDecision::ProposeAccept || ev->decision == TieDecision::ProposeReject) {
      auto& answer = counts.at(1, cond, ev->partner_action, ev->decider_action);
      ++answer.total;
      if (ev->decision == TieDecision::ProposeAccept) ++answer.connects;
    }
  }
}

// Per-round metrics of one session; the log is replayed first so corrupt
// logs are rejected rather than analyzed.
inline std::vector<RoundMetrics> session_metrics(const EventLog& log, std::uint64_t louvain_master) {
  replay(log);
  const auto& cfg = log.header.config;
  const std::size_t n = cfg.n_players;
  const double nd = static_cast<double>(n);
  std::vector<RoundMetrics> out;

  std::vector<Action> actions(n);
  std::vector<Points> wealth = log.header.initial_wealth;
  std::vector<SwbRating> swb(n);

  for (const auto& rec : log.records) {
    if (const auto* d = std::get_if<DecisionRecord>(&rec)) {
      actions[d->player] = d->action;
    } else if (const auto* p = std::get_if<PayoffRecord>(&rec)) {
      wealth[p->player] = p->wealth;
    } else if (const auto* s = std::get_if<SwbRecord>(&rec)) {
      swb[s->player] = s->rating;
    } else if (const auto* snap = std::get_if<EdgeSnapshot>(&rec)) {
      if (snap->round() == 0) continue;
      const Network g = snap->to_network(n);
      RoundMetrics m;
      m.round = snap->round();
      m.cooperation_rate = static_cast<double>(std::count(actions.begin(), actions.end(), Action::Cooperate)) / nd;
      m.mean_degree = 2.0 * static_cast<double>(g.edge_count()) / nd;
      double w = 0.0, q1 = 0.0, q2 = 0.0;
      std::vector<double> floored(n);
      for (std::size_t i = 0; i < n; ++i) {
        w += static_cast<double>(wealth[i]);
        q1 += swb[i].feeling;
        q2 += swb[i].presented;
        floored[i] = static_cast<double>(std::max<Points>(0, wealth[i]));
      }
      m.mean_wealth = w / nd;
      m.mean_q1 = q1 / nd;
      m.mean_q2 = q2 / nd;
      m.louvain_seed = louvain_seed_for(louvain_master, log.header.label, m.round);
      Rng lrng(m.louvain_seed);
      m.community_count = static_cast<double>(louvain(g, lrng).count);
      m.transitivity = transitivity(g);
      if (std::any_of(floored.begin(), floored.end(), [](double v) { return v > 0.0; })) m.gini = gini(std::span<const double>(floored));
      const auto cv = eigenvector_centrality(g);
      const auto by_action = mean_centrality_by_action(cv, actions);
      m.coop_centrality = by_action.cooperators;
      m.defect_centrality = by_action.defectors;
      m.coop_triangle_fraction = n >= 3 ? cooperator_triangle_fraction(g, actions) : 0.0;
      out.push_back(m);
    }
  }
  return out;
}

// Column set shared by networks.csv and the per-network aggregates.
inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{
      "cooperation_rate", "mean_degree",   "mean_wealth",       "mean_q1",          "mean_q2",
      "community_count",  "transitivity",  "gini",              "coop_centrality",  "defect_centrality",
      "coop_triangle_fraction"};
  return cols;
}

inline std::optional<double> metric_value(const RoundMetrics& m, const std::string& col) {
  if (col == "cooperation_rate") return m.cooperation_rate;
  if (col == "mean_degree") return m.mean_degree;
  if (col == "mean_wealth") return m.mean_wealth;
  if (col == "mean_q1") return m.mean_q1;
  if (col == "mean_q2") return m.mean_q2;
  if (col == "community_count") return m.community_count;
  if (col == "transitivity") return m.transitivity;
  if (col == "gini") return m.gini;
  if (col == "coop_centrality") return m.coop_centrality;
  if (col == "defect_centrality") return m.defect_centrality;
  if (col == "coop_triangle_fraction") return m.coop_triangle_fraction;
  throw InvalidArgument("unknown metric column '" + col + "'");
}

// Across-round means of one network. Extra derived columns:
// centrality_gap (mean over rounds with both groups present),
// final_community_count and final_mean_wealth.
struct NetworkSummary {
  SessionEntry session;
  std::map<std::string, std::optional<double>> values;

  std::optional<double> get(const std::string& col) const {
    auto it = values.find(col);
    if (it == values.end()) throw InvalidArgument("unknown column '" + col + "'");
    return it->second;
  }
};

inline const std::vector<std::string>& network_columns() {
  static const std::vector<std::string> cols = [] {
    auto c = metric_columns();
    c.insert(c.end(), {"centrality_gap", "final_community_count", "final_mean_wealth"});
    return c;
  }();
  return cols;
}

inline NetworkSummary summarize_network(const SessionEntry& e, const std::vector<RoundMetrics>& rounds) {
  NetworkSummary s;
  s.session = e;
  for (const auto& col : metric_columns()) {
    double sum = 0.0;
    int count = 0;
    for (const auto& m : rounds)
      if (auto v = metric_value(m, col)) {
        sum += *v;
        ++count;
      }
    s.values[col] = count ? std::optional<double>(sum / count) : std::nullopt;
  }
  double gap = 0.0;
  int gap_rounds = 0;
  for (const auto& m : rounds)
    if (m.coop_centrality && m.defect_centrality) {
      gap += *m.coop_centrality - *m.defect_centrality;
      ++gap_rounds;
    }
  s.values["centrality_gap"] = gap_rounds ? std::optional<double>(gap / gap_rounds) : std::nullopt;
  s.values["final_community_count"] = rounds.empty() ? std::nullopt : std::optional<double>(rounds.back().community_count);
  s.values["final_mean_wealth"] = rounds.empty() ? std::nullopt : std::optional<double>(rounds.back().mean_wealth);
  return s;
}

// The ten condition-summary outcomes, in report order.
inline const std::vector<std::string>& summary_outcomes() {
  static const std::vector<std::string> rows{
      "cooperation_rate", "mean_degree",     "mean_wealth",       "mean_q1",
      "mean_q2",          "community_count", "transitivity",      "coop_centrality",
      "defect_centrality", "coop_triangle_fraction"};
  return rows;
}

struct ConditionContrast {
  std::string outcome;
  std::optional<double> visible_mean;
  std::optional<double> invisible_mean;
  std::size_t visible_n = 0;
  std::size_t invisible_n = 0;
  std::optional<double> difference;  // visible - invisible
  std::optional<double> se;          // Welch standard error of the difference
  std::optional<double> p_value;     // permutation, two-sided
};

inline std::vector<double> column_values(const std::vector<NetworkSummary>& nets, const std::string& col, Condition c) {
  std::vector<double> out;
  for (const auto& n : nets)
    if (n.session.condition == c)
      if (auto v = n.get(col)) out.push_back(*v);
  return out;
}

inline ConditionContrast contrast(const std::vector<NetworkSummary>& nets, const std::string& col, int iterations,
                                  std::uint64_t seed) {
  ConditionContrast c;
  c.outcome = col;
  const auto vis = column_values(nets, col, Condition::Visible);
  const auto inv = column_values(nets, col, Condition::Invisible);
  c.visible_n = vis.size();
  c.invisible_n = inv.size();
  if (!vis.empty()) c.visible_mean = stats::mean(vis);
  if (!inv.empty()) c.invisible_mean = stats::mean(inv);
  if (c.visible_mean && c.invisible_mean) c.difference = *c.visible_mean - *c.invisible_mean;
  if (vis.size() >= 2 && inv.size() >= 2) {
    c.se = std::sqrt(stats::variance(vis) / static_cast<double>(vis.size()) +
                     stats::variance(inv) / static_cast<double>(inv.size()));
    Rng rng(seed);
    c.p_value = stats::permutation_test(vis, inv, iterations, rng);
  }
  return c;
}

struct AnalysisResult {
  std::vector<std::vector<RoundMetrics>> rounds;  // per session, manifest order
  std::vector<NetworkSummary> networks;
  std::vector<ConditionContrast> summary;
  TieCounts ties;
};

inline std::uint64_t permutation_seed(std::uint64_t master, const std::string& outcome) {
  return derive_seed(master, "permutation", hash_tag(outcome));
}

inline std::string trajectories_csv(const Manifest& m, const AnalysisResult& a) {
  using detail::fmt10;
  std::ostringstream os;
  os << "network,condition,replicate,round,cooperation_rate,mean_degree,mean_wealth,mean_q1,mean_q2,"
        "community_count,transitivity,gini,coop_centrality,defect_centrality,coop_triangle_fraction,louvain_seed\n";
  for (std::size_t i = 0; i < m.sessions.size(); ++i) {
    const auto& e = m.sessions[i];
    for (const auto& r : a.rounds[i])
      os << e.label() << ',' << to_string(e.condition) << ',' << e.replicate << ',' << r.round << ','
         << fmt10(r.cooperation_rate) << ',' << fmt10(r.mean_degree) << ',' << fmt10(r.mean_wealth) << ','
         << fmt10(r.mean_q1) << ',' << fmt10(r.mean_q2) << ',' << fmt10(r.community_count) << ','
         << fmt10(r.transitivity) << ',' << fmt10(r.gini) << ',' << fmt10(r.coop_centrality) << ','
         << fmt10(r.defect_centrality) << ',' << fmt10(r.coop_triangle_fraction) << ',' << r.louvain_seed << '\n';
  }
  return os.str();
}

inline std::string networks_csv(const AnalysisResult& a) {
  std::ostringstream os;
  os << "network,condition,replicate";
  for (const auto& c : network_columns()) os << ',' << c;
  os << '\n';
  for (const auto& n : a.networks) {
    os << n.session.label() << ',' << to_string(n.session.condition) << ',' << n.session.replicate;
    for (const auto& c : network_columns()) os << ',' << detail::fmt10(n.get(c));
    os << '\n';
  }
  return os.str();
}

inline std::string summary_csv(const AnalysisResult& a) {
  using detail::fmt10;
  std::ostringstream os;
  os << "outcome,visible_mean,invisible_mean,difference,se,visible_n,invisible_n,p_value\n";
  for (const auto& c : a.summary)
    os << c.outcome << ',' << fmt10(c.visible_mean) << ',' << fmt10(c.invisible_mean) << ',' << fmt10(c.difference)
       << ',' << fmt10(c.se) << ',' << c.visible_n << ',' << c.invisible_n << ',' << fmt10(c.p_value) << '\n';
  return os.str();
}

inline std::string tie_cells_csv(const AnalysisResult& a) {
  std::ostringstream os;
  os << "role,condition,own_action,other_action,connects,total\n";
  for (int role = 0; role < 2; ++role)
    for (auto c : {Condition::Invisible, Condition::Visible})
      for (auto own : {Action::Cooperate, Action::Defect})
        for (auto other : {Action::Cooperate, Action::Defect}) {
          const auto& cell = a.ties.at(role, c, own, other);
          os << (role == 0 ? "decider" : "acceptor") << ',' << to_string(c) << ',' << to_string(own) << ','
             << to_string(other) << ',' << cell.connects << ',' << cell.total << '\n';
        }
  return os.str();
}

// Computes every per-round metric of every session and the condition
// summary; writes trajectories.csv, networks.csv, summary.csv, tie_cells.csv.
inline AnalysisResult analyze(const fs::path& run_dir, int jobs = 1) {
  const Manifest m = read_manifest(run_dir);
  AnalysisResult a;
  a.rounds.resize(m.sessions.size());
  std::vector<TieCounts> ties(m.sessions.size());
  detail::parallel_for(m.sessions.size(), jobs, [&](std::size_t i) {
    const auto log = io::load_log((run_dir / m.sessions[i].file).string());
    if (log.header.label != m.sessions[i].label() || log.header.config.condition != m.sessions[i].condition)
      throw ParseError((run_dir / m.sessions[i].file).string() + ": header does not match the manifest entry");
    a.rounds[i] = session_metrics(log, m.config.louvain_master());
    count_ties(log, ties[i]);
  });
  for (std::size_t i = 0; i < m.sessions.size(); ++i) {
    a.networks.push_back(summarize_network(m.sessions[i], a.rounds[i]));
    a.ties.merge(ties[i]);
  }
  for (const auto& outcome : summary_outcomes())
    a.summary.push_back(contrast(a.networks, outcome, m.config.permutation_iterations,
                                 permutation_seed(m.config.master_seed(), outcome)));

  detail::write_text(run_dir / "trajectories.csv", trajectories_csv(m, a));
  detail::write_text(run_dir / "networks.csv", networks_csv(a));
  detail::write_text(run_dir / "summary.csv", summary_csv(a));
  detail::write_text(run_dir / "tie_cells.csv", tie_cells_csv(a));
  return a;
}

// Reads networks.csv back (the analyzed form consumed by replicate/mediate).
inline std::vector<NetworkSummary> load_networks(const fs::path& run_dir) {
  const auto path = run_dir / "networks.csv";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " (run analyze first)");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "network" || header[1] != "condition" || header[2] != "replicate")
    throw ParseError(path.string() + ":1: unexpected header");
  std::vector<NetworkSummary> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != header.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " cells [record: " + line + "]");
    NetworkSummary s;
    try {
      s.session.condition = io::parse_condition(cells[1]);
      s.session.replicate = std::stoi(cells[2]);
      for (std::size_t k = 3; k < header.size(); ++k)
        s.values[header[k]] = cells[k].empty() ? std::nullopt : std::optional<double>(std::stod(cells[k]));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what() + " [record: " + line + "]");
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline TieCounts load_tie_cells(const fs::path& run_dir) {
  const auto path = run_dir / "tie_cells.csv";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " (run analyze first)");
  TieCounts t;
  std::string line;
  std::getline(in, line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::stringstream ss(line);
    std::string role, cond, own, other, connects, total;
    std::getline(ss, role, ',');
    std::getline(ss, cond, ',');
    std::getline(ss, own, ',');
    std::getline(ss, other, ',');
    std::getline(ss, connects, ',');
    std::getline(ss, total, ',');
    try {
      auto& cell = t.at(role == "decider" ? 0 : 1, io::parse_condition(cond), io::parse_action(own), io::parse_action(other));
      cell.connects = std::stol(connects);
      cell.total = std::stol(total);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what() + " [record: " + line + "]");
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Calibration-implied expectations

// Expected trajectory of a calibrated-Bernoulli session. Actions are i.i.d.
// each round and independent of the network, so every pair's tie is its own
// two-state Markov chain driven by the table.
struct ImpliedTrajectory {
  double cooperation_rate = 0.0;
  std::vector<double> density;      // after rewiring, rounds 0..R
  std::vector<double> mean_wealth;  // after payoff, rounds 0..R
  double mean_degree() const;       // across rounds 1..R
  double mean_wealth_across_rounds() const;
  std::size_t n = 0;
};

inline double ImpliedTrajectory::mean_degree() const {
  double s = 0.0;
  for (std::size_t t = 1; t < density.size(); ++t) s += density[t];
  return s / static_cast<double>(density.size() - 1) * static_cast<double>(n - 1);
}

inline double ImpliedTrajectory::mean_wealth_across_rounds() const {
  double s = 0.0;
  for (std::size_t t = 1; t < mean_wealth.size(); ++t) s += mean_wealth[t];
  return s / static_cast<double>(mean_wealth.size() - 1);
}

inline ImpliedTrajectory implied_trajectory(const SessionConfig& cfg, const CalibrationTable& table, Condition cond) {
  ImpliedTrajectory tr;
  tr.n = cfg.n_players;
  const double c = table.cooperation_rate(cond);
  tr.cooperation_rate = c;
  const Action acts[2] = {Action::Cooperate, Action::Defect};
  const double pa[2] = {c, 1.0 - c};
  double keep = 0.0, form = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double w = pa[i] * pa[j];
      keep += w * table.connect_prob(cond, acts[i], acts[j]);
      form += w * table.connect_prob(cond, acts[i], acts[j]) * table.connect_prob(cond, acts[j], acts[i]);
    }
  const double s = cfg.rewiring_pair_probability;
  const double n = static_cast<double>(cfg.n_players);
  double rich_share = cfg.rich_fraction;
  if (cfg.wealth_assignment == WealthAssignment::Shuffled)
    rich_share = std::min(n, static_cast<double>(std::lround(cfg.rich_fraction * n))) / n;
  const double w0 = static_cast<double>(cfg.poor_wealth) +
                    rich_share * static_cast<double>(cfg.rich_wealth - cfg.poor_wealth);
  const double net = static_cast<double>(cfg.cooperation_benefit_per_edge - cfg.cooperation_cost_per_edge);

  tr.density.push_back(cfg.initial_density);
  tr.mean_wealth.push_back(w0);
  for (int t = 1; t <= cfg.rounds; ++t) {
    const double rho = tr.density.back();
    tr.mean_wealth.push_back(tr.mean_wealth.back() + net * c * (n - 1.0) * rho);
    tr.density.push_back(rho * (1.0 - s * (1.0 - keep)) + (1.0 - rho) * s * form);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Replication verdicts

struct Verdict {
  std::string finding;
  bool passed = false;
  double effect = 0.0;  // visible - invisible (or the coefficient)
  std::optional<double> p_value;
  std::string detail;
};

struct ReplicationReport {
  std::vector<Verdict> verdicts;
  bool all_passed() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
  }
};

struct HomophilyFit {
  double interaction = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  stats::LogisticFit fit;
};

// connect ~ 1 + decider_C + homophilic + visible + homophilic:visible on the
// first choice of every selected pair.
inline HomophilyFit fit_homophily_interaction(const TieCounts& t) {
  long rows = 0;
  for (auto c : {Condition::Invisible, Condition::Visible})
    for (auto d : {Action::Cooperate, Action::Defect})
      for (auto p : {Action::Cooperate, Action::Defect}) rows += t.at(0, c, d, p).total;
  Eigen::MatrixXd X(rows, 5);
  std::vector<int> y(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (auto c : {Condition::Invisible, Condition::Visible})
    for (auto d : {Action::Cooperate, Action::Defect})
      for (auto p : {Action::Cooperate, Action::Defect}) {
        const auto& cell = t.at(0, c, d, p);
        const double vis = c == Condition::Visible ? 1.0 : 0.0;
        const double homo = d == p ? 1.0 : 0.0;
        for (long k = 0; k < cell.total; ++k, ++r) {
          X(r, 0) = 1.0;
          X(r, 1) = d == Action::Cooperate ? 1.0 : 0.0;
          X(r, 2) = homo;
          X(r, 3) = vis;
          X(r, 4) = homo * vis;
          y[static_cast<std::size_t>(r)] = k < cell.connects ? 1 : 0;
        }
      }
  const std::vector<std::string> names{"intercept", "decider_C", "homophilic", "visible", "homophilic:visible"};
  HomophilyFit h;
  h.fit = stats::logistic_fit(y, X, names);
  h.interaction = h.fit.coefficients[4];
  h.se = h.fit.standard_errors[4];
  h.p_value = h.fit.p_values[4];
  return h;
}

// Evaluates the directional findings (each needs the stated direction and
// significance) and, for calibrated runs, the null-effect checks.
inline ReplicationReport replicate(const fs::path& run_dir) {
  const Manifest m = read_manifest(run_dir);
  const auto nets = load_networks(run_dir);
  const auto ties = load_tie_cells(run_dir);
  std::size_t vis = 0, inv = 0;
  for (const auto& n : nets) (n.session.condition == Condition::Visible ? vis : inv)++;
  if (vis < 2 || inv < 2) throw UndefinedInput("replicate needs at least two networks in each condition");

  const auto master = m.config.master_seed();
  const int iters = m.config.permutation_iterations;
  ReplicationReport rep;
  auto directional = [&](const std::string& finding, const std::string& col, int sign, double alpha) {
    const auto c = contrast(nets, col, iters, permutation_seed(master, col));
    Verdict v;
    v.finding = finding;
    v.effect = c.difference.value_or(0.0);
    v.p_value = c.p_value;
    v.passed = c.difference && c.p_value && (*c.difference * sign > 0.0) && *c.p_value < alpha;
    v.detail = "visible " + detail::fmt10(c.visible_mean) + " vs invisible " + detail::fmt10(c.invisible_mean);
    rep.verdicts.push_back(v);
  };
  directional("transitivity lower in visible", "transitivity", -1, 0.05);
  directional("community count higher in visible", "community_count", +1, 0.05);
  directional("cooperator-defector centrality gap smaller in visible", "centrality_gap", -1, 0.05);
  directional("cooperator triangle fraction lower in visible", "coop_triangle_fraction", -1, 0.05);

  {
    Verdict v;
    v.finding = "homophily x visibility interaction negative";
    try {
      const auto h = fit_homophily_interaction(ties);
      v.effect = h.interaction;
      v.p_value = h.p_value;
      v.passed = h.interaction < 0.0 && h.p_value < 0.01;
      v.detail = "coefficient " + detail::fmt10(h.interaction) + " (se " + detail::fmt10(h.se) + ")";
    } catch (const Error& e) {
      v.detail = e.what();
    }
    rep.verdicts.push_back(v);
  }

  if (m.config.policy.kind == PolicyKind::CalibratedBernoulli) {
    const auto& t = m.config.policy.table;
    const auto iv = implied_trajectory(m.config.session, t, Condition::Visible);
    const auto ii = implied_trajectory(m.config.session, t, Condition::Invisible);
    auto null_check = [&](const std::string& finding, const std::string& col, double implied_gap) {
      const auto c = contrast(nets, col, iters, permutation_seed(master, col));
      Verdict v;
      v.finding = finding;
      v.effect = c.difference.value_or(0.0);
      v.p_value = c.p_value;
      const double bound = std::abs(implied_gap) + 2.0 * c.se.value_or(0.0);
      v.passed = c.difference && std::abs(*c.difference) < bound;
      v.detail = "|difference| " + detail::fmt10(std::abs(v.effect)) + " vs bound " + detail::fmt10(bound) +
                 " (implied gap " + detail::fmt10(implied_gap) + ")";
      rep.verdicts.push_back(v);
    };
    null_check("cooperation rate within calibrated gap", "cooperation_rate", iv.cooperation_rate - ii.cooperation_rate);
    null_check("mean degree within calibrated gap", "mean_degree", iv.mean_degree() - ii.mean_degree());
    null_check("mean SWB (q1) within calibrated gap", "mean_q1", 0.0);
    null_check("mean SWB (q2) within calibrated gap", "mean_q2", 0.0);
    null_check("mean wealth within calibrated gap", "mean_wealth",
               iv.mean_wealth_across_rounds() - ii.mean_wealth_across_rounds());
  }

  std::ostringstream os;
  os << "finding,verdict,effect,p_value,detail\n";
  for (const auto& v : rep.verdicts)
    os << '"' << v.finding << "\"," << (v.passed ? "PASS" : "FAIL") << ',' << detail::fmt10(v.effect) << ','
       << detail::fmt10(v.p_value) << ",\"" << v.detail << "\"\n";
  detail::write_text(run_dir / "verdict.csv", os.str());
  return rep;
}

// ---------------------------------------------------------------------------
// Mediation over per-network means

inline stats::MediationResult mediate_cmd(const fs::path& run_dir, const std::string& mediator,
                                          const std::string& outcome) {
  const Manifest m = read_manifest(run_dir);
  const auto nets = load_networks(run_dir);
  const auto& cols = network_columns();
  for (const auto& col : {mediator, outcome})
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) {
      std::string list;
      for (const auto& c : cols) list += (list.empty() ? "" : ", ") + c;
      throw InvalidArgument("unknown column '" + col + "'; available columns: " + list);
    }
  std::vector<double> x, z, y;
  for (const auto& n : nets) {
    const auto zv = n.get(mediator);
    const auto yv = n.get(outcome);
    if (!zv || !yv) continue;
    x.push_back(n.session.condition == Condition::Visible ? 1.0 : 0.0);
    z.push_back(*zv);
    y.push_back(*yv);
  }
  Rng rng(derive_seed(m.config.master_seed(), "mediation", hash_tag(mediator), hash_tag(outcome)));
  const auto r = stats::mediate(x, z, y, m.config.bootstrap_resamples, rng);

  using detail::fmt10;
  std::ostringstream os;
  os << "mediator,outcome,clusters,a,b,total,direct,indirect,proportion_mediated,ci_low,ci_high,p_value,bootstrap,"
        "proportion_unstable\n"
     << mediator << ',' << outcome << ',' << x.size() << ',' << fmt10(r.a) << ',' << fmt10(r.b) << ','
     << fmt10(r.total) << ',' << fmt10(r.direct) << ',' << fmt10(r.indirect) << ',' << fmt10(r.proportion) << ','
     << fmt10(r.ci_low) << ',' << fmt10(r.ci_high) << ',' << fmt10(r.p_value) << ',' << r.bootstrap << ','
     << (r.proportion_unstable ? 1 : 0) << '\n';
  detail::write_text(run_dir / ("mediation_" + mediator + "__" + outcome + ".csv"), os.str());
  return r;
}

}  // namespace swbnet::harness
