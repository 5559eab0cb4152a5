#include "rsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "rsim/byz.hpp"

namespace rsim {

namespace {

std::uint64_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad " + what + " '" + s + "'");
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

Stat stat_of(std::vector<double> xs) {
  Stat s;
  if (xs.empty()) return s;
  std::sort(xs.begin(), xs.end());
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  // Nearest rank.
  const auto k = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(xs.size())));
  s.p99 = xs[std::max<std::size_t>(k, 1) - 1];
  s.max = xs.back();
  return s;
}

bool budgeted_cause(const std::string& cause) { return cause == "committee-tail" || cause == "hash-collision"; }

}  // namespace

std::uint64_t FValue::resolve(std::uint64_t n, const std::string& protocol, double epsilon0) const {
  static const std::regex div(R"(n\s*/\s*(\d+))"), sub(R"(n\s*-\s*(\d+))"), frac(R"((0?\.\d+|1(\.0*)?)\s*\*?\s*n)");
  std::smatch m;
  if (text == "f_bound") {
    return protocol == "byzantine" ? byzantine_tolerance(n, epsilon0) : n - 1;
  }
  if (text == "n") return n;
  if (std::regex_match(text, m, div)) {
    const auto k = parse_count(m[1], "f divisor");
    if (k == 0) throw ConfigError("f divisor must be positive");
    return n / k;
  }
  if (std::regex_match(text, m, sub)) {
    const auto k = parse_count(m[1], "f offset");
    if (k > n) throw ConfigError("f value '" + text + "' is negative at n=" + std::to_string(n));
    return n - k;
  }
  if (std::regex_match(text, m, frac)) return static_cast<std::uint64_t>(std::floor(std::stod(m[1]) * n));
  return parse_count(text, "f value");
}

std::uint64_t NValue::resolve(std::uint64_t n) const {
  if (absolute) return *absolute;
  std::uint64_t v = factor;
  for (unsigned i = 0; i < power; ++i) v *= n;
  return v;
}

SweepSpec SweepSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
  SweepSpec s;
  try {
    s.protocol = j.value("protocol", s.protocol);
    s.n_values = j.at("n_values").get<std::vector<std::uint64_t>>();
    for (const auto& f : j.at("f_values")) s.f_values.push_back({f.is_string() ? f.get<std::string>() : f.dump()});
    s.adversaries = j.at("adversaries").get<std::vector<std::string>>();
    const auto trials = j.at("trials_per_cell").get<std::int64_t>();
    if (trials < 1) throw ConfigError("trials_per_cell must be at least 1");
    s.trials_per_cell = static_cast<std::uint64_t>(trials);
    s.base_seed = j.value("base_seed", std::uint64_t{0});
    s.epsilon0 = j.value("epsilon0", s.epsilon0);
    s.early_exit = j.value("early_exit", false);
    if (j.value("count_policy", std::string("sent")) == "delivered") s.count_policy = CountPolicy::delivered;
    if (j.contains("overrides")) {
      const auto& o = j["overrides"];
      if (o.contains("p0") && !o["p0"].is_null()) s.overrides.p0 = o["p0"].get<double>();
      s.overrides.clamp = o.value("clamp", true);
    }
    if (s.protocol == "byzantine") s.N = NValue{5, 2, std::nullopt};
    if (j.contains("N")) {
      const auto& N = j["N"];
      if (N.is_number_unsigned()) {
        s.N.absolute = N.get<std::uint64_t>();
      } else {
        static const std::regex expr(R"((\d*)\s*\*?\s*n(\^(\d+))?)");
        std::smatch m;
        const auto text = N.get<std::string>();
        if (!std::regex_match(text, m, expr)) throw ConfigError("bad N expression '" + text + "'");
        s.N = NValue{m[1].length() ? parse_count(m[1], "N factor") : 1,
                     m[3].matched ? static_cast<unsigned>(parse_count(m[3], "N power")) : 1, std::nullopt};
      }
    }
    const auto& out = j.value("outputs", nlohmann::json::object());
    s.raw_csv = out.value("raw_csv", s.raw_csv);
    s.summary_csv = out.value("summary_csv", s.summary_csv);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  s.validate();
  return s;
}

void SweepSpec::validate() const {
  if (protocol != "crash" && protocol != "byzantine") throw ConfigError("unknown protocol '" + protocol + "'");
  if (trials_per_cell < 1) throw ConfigError("trials_per_cell must be at least 1");
  if (n_values.empty() || f_values.empty() || adversaries.empty()) throw ConfigError("empty sweep dimension");
  for (const auto& cell : expand_cells(*this)) trial_config(*this, cell, 0).validate();
}

std::vector<Cell> expand_cells(const SweepSpec& spec) {
  std::vector<Cell> cells;
  for (auto n : spec.n_values)
    for (const auto& f : spec.f_values)
      for (const auto& a : spec.adversaries) cells.push_back({n, f.resolve(n, spec.protocol, spec.epsilon0), a});
  return cells;
}

TrialConfig trial_config(const SweepSpec& spec, const Cell& cell, std::uint64_t trial) {
  TrialConfig c;
  c.protocol = spec.protocol;
  c.n = cell.n;
  c.N = spec.N.resolve(cell.n);
  c.epsilon0 = spec.epsilon0;
  c.seed = spec.base_seed + trial;
  c.adversary.name = cell.adversary;
  c.adversary.budget_f = cell.f;
  c.overrides = spec.overrides;
  c.early_exit = spec.early_exit;
  c.count_policy = spec.count_policy;
  return c;
}

bool deterministic_failure(const Transcript& t) {
  if (t.monitor_failures() == 0) return false;
  if (t.protocol != "byzantine") return true;
  const auto flag = [&](const char* k) {
    auto it = t.extra.find(k);
    return it != t.extra.end() && it->second != 0.0;
  };
  return !(flag("committee_tail") || flag("hash_collision"));
}

namespace {
const char* const kExtraColumns[] = {"iterations",        "committee_size", "loop_messages", "announce_messages",
                                     "committee_tail",    "hash_collision", "list_divergence", "timeouts",
                                     "rebuild_phases"};
}

std::string TrialRow::csv_header() {
  std::string h = "cell,trial,adversary," + Transcript::csv_header() + ",failure_cause";
  for (const char* c : kExtraColumns) h += std::string(",") + c;
  return h;
}

std::string TrialRow::csv_row() const {
  std::string r = std::to_string(cell) + ',' + std::to_string(trial) + ',' + adversary + ',' + transcript.csv_row() +
                  ',' + csv_quote(transcript.failure_cause);
  for (const char* c : kExtraColumns) {
    r += ',';
    auto it = transcript.extra.find(c);
    if (it != transcript.extra.end()) r += fmt(it->second);
  }
  return r;
}

std::string CellSummary::csv_header() {
  return "n,f_budget,f_actual_mean,adversary,trials,rounds_mean,rounds_max,messages_mean,messages_p99,"
         "messages_max,bits_mean,bits_max,success_rate,monitor_failure_count,unexplained_failures";
}

std::string CellSummary::csv_row() const {
  std::ostringstream os;
  os << cell.n << ',' << cell.f << ',' << fmt(f_actual_mean) << ',' << cell.adversary << ',' << trials << ','
     << fmt(rounds.mean) << ',' << fmt(rounds.max) << ',' << fmt(messages.mean) << ',' << fmt(messages.p99) << ','
     << fmt(messages.max) << ',' << fmt(bits.mean) << ',' << fmt(bits.max) << ',' << fmt(success_rate) << ','
     << monitor_failure_count << ',' << unexplained_failures;
  return os.str();
}

std::string SweepResult::raw_csv() const {
  std::string s = TrialRow::csv_header() + '\n';
  for (const auto& r : rows) s += r.csv_row() + '\n';
  return s;
}

std::string SweepResult::summary_csv() const {
  std::string s = CellSummary::csv_header() + '\n';
  for (const auto& c : summaries) s += c.csv_row() + '\n';
  return s;
}

SweepResult run_sweep(const SweepSpec& spec, unsigned jobs, const std::function<void(const TrialRow&)>& on_row) {
  spec.validate();
  SweepResult res;
  res.cells = expand_cells(spec);
  const std::uint64_t T = spec.trials_per_cell;
  const std::size_t total = res.cells.size() * T;
  res.rows.resize(total);

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t c = i / T;
      const std::uint64_t trial = i % T;
      TrialRow row;
      row.cell = c;
      row.trial = trial;
      row.adversary = res.cells[c].adversary;
      try {
        row.transcript = run_trial(trial_config(spec, res.cells[c], trial));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = total;
        return;
      }
      auto& t = row.transcript;
      t.events.clear();
      t.events.shrink_to_fit();
      t.outcome.clear();
      t.outcome.shrink_to_fit();
      t.metrics.messages_per_round = {};
      std::erase_if(t.verdicts, [](const Verdict& v) { return v.holds; });
      if (on_row) {
        std::lock_guard lock(mu);
        on_row(row);
      }
      res.rows[i] = std::move(row);
    }
  };
  jobs = std::max(1U, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (std::size_t c = 0; c < res.cells.size(); ++c) {
    CellSummary s;
    s.cell = res.cells[c];
    s.trials = T;
    std::vector<double> rounds, messages, bits;
    double f_sum = 0, ok = 0;
    for (std::uint64_t k = 0; k < T; ++k) {
      const auto& t = res.rows[c * T + k].transcript;
      rounds.push_back(static_cast<double>(t.metrics.rounds_total));
      messages.push_back(static_cast<double>(t.metrics.messages_total));
      bits.push_back(static_cast<double>(t.metrics.bits_total));
      f_sum += static_cast<double>(t.f_actual);
      ok += t.success ? 1 : 0;
      s.monitor_failure_count += t.monitor_failures();
      if (!t.success && (t.protocol != "byzantine" || !budgeted_cause(t.failure_cause))) ++s.unexplained_failures;
      if (deterministic_failure(t)) ++res.deterministic_failures;
    }
    s.f_actual_mean = f_sum / static_cast<double>(T);
    s.rounds = stat_of(rounds);
    s.messages = stat_of(messages);
    s.bits = stat_of(bits);
    s.success_rate = ok / static_cast<double>(T);
    res.summaries.push_back(s);
  }
  return res;
}

void write_sweep(const SweepResult& result, const SweepSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  auto put = [&](const std::string& name, const std::string& body) {
    const auto path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << body;
    out.close();
    if (!out) throw IoError("cannot write " + path.string());
  };
  put(spec.raw_csv, result.raw_csv());
  put(spec.summary_csv, result.summary_csv());
  std::string failures;
  for (const auto& r : result.rows)
    if (!r.transcript.success || r.transcript.monitor_failures() > 0)
      failures += trial_config(spec, result.cells[r.cell], r.trial).to_json().dump() + '\n';
  put("failures.jsonl", failures);
}

std::vector<std::string> model_names() { return {"n_log2n", "f_logn_nlogn", "byz"}; }

double model_value(const std::string& model, double n, double f, double N) {
  const double ln = std::log2(n);
  if (model == "n_log2n") return n * ln * ln;
  if (model == "f_logn_nlogn") return (f + ln) * n * ln;
  if (model == "byz") return f * std::log2(N) * ln * ln * ln + n * ln;
  throw ConfigError("unknown model '" + model + "'");
}

FitReport fit_scaling(const std::vector<FitPoint>& points, const std::string& model) {
  model_value(model, 2, 0, 2);
  std::set<double> ns, fs;
  for (const auto& p : points) {
    ns.insert(p.n);
    fs.insert(p.f);
  }
  if (ns.size() < 4 && fs.size() < 4) throw InsufficientData("need at least 4 distinct n or f values");
  double num = 0, den = 0;
  std::vector<double> xs;
  for (const auto& p : points) {
    const double x = model_value(model, p.n, p.f, p.N);
    xs.push_back(x);
    num += x * p.messages;
    den += x * x;
  }
  FitReport r;
  r.model = model;
  r.points = points.size();
  r.coefficient = den > 0 ? num / den : 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double y = points[i].messages;
    const double resid = std::abs(y - r.coefficient * xs[i]);
    r.max_relative_residual = std::max(r.max_relative_residual, y != 0 ? resid / std::abs(y) : resid);
    r.ratios.push_back(xs[i] > 0 ? y / xs[i] : 0);
  }
  return r;
}

std::vector<FitPoint> read_fit_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw InsufficientData("empty csv " + path);
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : s) {
      if (c == '"') quoted = !quoted;
      else if (c == ',' && !quoted) out.push_back(std::exchange(cur, {}));
      else cur += c;
    }
    out.push_back(cur);
    return out;
  };
  const auto head = split(line);
  auto col = [&](const char* name) {
    auto it = std::find(head.begin(), head.end(), name);
    if (it == head.end()) throw ConfigError(std::string("csv lacks column ") + name);
    return static_cast<std::size_t>(it - head.begin());
  };
  const auto cn = col("n"), cf = col("f_actual"), cN = col("N"), cm = col("messages");
  std::vector<FitPoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    pts.push_back({std::stod(f.at(cn)), std::stod(f.at(cf)), std::stod(f.at(cN)), std::stod(f.at(cm))});
  }
  return pts;
}

}  // namespace rsim
