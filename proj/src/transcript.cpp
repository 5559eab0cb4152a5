#include "rsim/transcript.hpp"

#include <cstdlib>
#include <sstream>

namespace rsim {

LogLevel parse_log_level(const std::string& s) {
  if (s == "summary") return LogLevel::summary;
  if (s == "trace") return LogLevel::trace;
  return LogLevel::off;
}

LogLevel log_level_from_env() {
  const char* v = std::getenv("RENAME_SIM_LOG");
  return v ? parse_log_level(v) : LogLevel::off;
}

std::uint64_t Transcript::monitor_failures() const {
  std::uint64_t k = 0;
  for (const auto& v : verdicts) k += v.holds ? 0 : 1;
  return k;
}

nlohmann::json Transcript::to_json() const {
  using nlohmann::json;
  json j;
  j["protocol"] = protocol;
  j["n"] = n;
  j["N"] = N;
  j["seed"] = seed;
  j["f_budget"] = f_budget;
  j["f_actual"] = f_actual;
  j["success"] = success;
  j["failure_cause"] = failure_cause;
  j["metrics"] = {{"messages_total", metrics.messages_total},
                  {"bits_total", metrics.bits_total},
                  {"rounds_total", metrics.rounds_total},
                  {"messages_delivered", metrics.messages_delivered},
                  {"messages_per_round", metrics.messages_per_round},
                  {"committee_size_history", metrics.committee_size_history}};
  json by_type = json::object();
  for (unsigned t = 1; t <= 10; ++t) {
    if (metrics.messages_by_type[t] == 0) continue;
    by_type[std::string(to_string(static_cast<MessageType>(t)))] = {
        {"messages", metrics.messages_by_type[t]}, {"bits", metrics.bits_by_type[t]}};
  }
  j["metrics"]["by_type"] = by_type;
  json evs = json::array();
  for (const auto& e : events) {
    json je = {{"round", e.round}, {"messages", e.messages}, {"bits", e.bits}, {"crashed", e.crashed}};
    if (!e.note.empty()) je["note"] = e.note;
    if (!e.sends.empty()) {
      json sends = json::array();
      for (const auto& s : e.sends) {
        sends.push_back({{"sender", s.sender},
                         {"receivers", s.receivers},
                         {"delivered_to", s.delivered_to},
                         {"type", std::string(to_string(s.type))},
                         {"bits_each", s.bits_each},
                         {"count", s.count}});
      }
      je["sends"] = std::move(sends);
    }
    evs.push_back(std::move(je));
  }
  j["events"] = std::move(evs);
  json out = json::array();
  for (const auto& o : outcome) {
    out.push_back({{"id", o.original.value},
                   {"new_id", o.new_id ? json(*o.new_id) : json(nullptr)},
                   {"faulty", o.faulty}});
  }
  j["outcome"] = std::move(out);
  json vs = json::array();
  for (const auto& v : verdicts) {
    vs.push_back({{"lemma", v.lemma}, {"round", v.round}, {"holds", v.holds}, {"witness", v.witness}});
  }
  j["verdicts"] = std::move(vs);
  j["extra"] = extra;
  return j;
}

std::string Transcript::csv_header() {
  return "protocol,n,N,f_budget,f_actual,seed,rounds,messages,bits,success,monitor_failures";
}

std::string Transcript::csv_row() const {
  std::ostringstream os;
  os << protocol << ',' << n << ',' << N << ',' << f_budget << ',' << f_actual << ',' << seed << ','
     << metrics.rounds_total << ',' << metrics.messages_total << ',' << metrics.bits_total << ','
     << (success ? 1 : 0) << ',' << monitor_failures();
  return os.str();
}

}  // namespace rsim
