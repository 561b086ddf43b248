#include "poolflip/heuristics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace poolflip {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string format_delay(const Delay& d) {
  return d ? std::to_string(*d) : std::string("random");
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw SpecError(key + "=" + value, "expected an integer for '" + key +
                                           "', got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw SpecError(key + "=" + value, "expected a number for '" + key +
                                           "', got '" + value + "'");
  }
  return out;
}

Delay parse_delay(const std::string& value) {
  if (value == "random") return std::nullopt;
  return parse_int("delay", value);
}

// Parameter list "k=v,k=v" into an ordered map; rejects duplicates.
std::map<std::string, std::string> parse_params(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item =
        trim(text.substr(pos, comma == std::string_view::npos ? text.size() - pos
                                                               : comma - pos));
    const std::size_t eq = item.find('=');
    if (item.empty() || eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw SpecError(item, "malformed parameter '" + item + "' (expected key=value)");
    }
    const std::string key = item.substr(0, eq);
    if (!out.emplace(key, item.substr(eq + 1)).second) {
      throw SpecError(item, "duplicate parameter '" + key + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

class ParamReader {
 public:
  ParamReader(std::string family, std::map<std::string, std::string> params)
      : family_(std::move(family)), params_(std::move(params)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = params_.find(key);
    if (it == params_.end()) return std::nullopt;
    std::string v = it->second;
    params_.erase(it);
    return v;
  }
  int take_int(const std::string& key, int fallback) {
    auto v = take(key);
    return v ? parse_int(key, *v) : fallback;
  }
  double take_real(const std::string& key, double fallback) {
    auto v = take(key);
    return v ? parse_real(key, *v) : fallback;
  }
  Delay take_delay(Delay fallback = std::nullopt) {
    auto v = take("delay");
    return v ? parse_delay(*v) : fallback;
  }
  void finish() const {
    if (!params_.empty()) {
      const auto& [k, v] = *params_.begin();
      throw SpecError(k + "=" + v,
                      "unknown parameter '" + k + "' for '" + family_ + "'");
    }
  }

 private:
  std::string family_;
  std::map<std::string, std::string> params_;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

// ---------------------------------------------------------------------------
// Spec text

HeuristicSpec parse_heuristic(std::string_view raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw SpecError(text, "empty heuristic identifier");
  const std::size_t colon = text.find(':');
  const std::string family = text.substr(0, colon);
  std::map<std::string, std::string> params;
  if (colon != std::string::npos) params = parse_params(std::string_view(text).substr(colon + 1));
  ParamReader in(family, std::move(params));

  HeuristicSpec spec;
  if (family == "sleep") {
    spec = SleepOnlySpec{};
  } else if (family == "random") {
    spec = RandomSpec{in.take_real("p", 0.33)};
  } else if (family == "periodic") {
    PeriodicSpec s;
    s.phase = in.take_int("phase", 4);
    s.delay = in.take_delay();
    spec = s;
  } else if (family == "burst") {
    BurstSpec s;
    s.phase = in.take_int("phase", 8);
    s.delay = in.take_delay();
    s.burst = in.take_int("burst", 3);
    spec = s;
  } else if (family == "awake") {
    spec = AwakeningSpec{in.take_real("lambda", 0.05)};
  } else if (family == "reta") {
    spec = RetaliatingSpec{in.take_int("phase", 4)};
  } else if (family == "pc") {
    PeriodicCheckSpec s;
    s.phase = in.take_int("phase", 4);
    s.delay = in.take_delay(0);
    spec = s;
  } else if (family == "pac") {
    PacSpec s;
    s.phase = in.take_int("phase", 4);
    s.delay = in.take_delay(0);
    spec = s;
  } else if (family == "upac") {
    spec = PacSpec{1, 0};
  } else {
    throw SpecError(family, "unknown heuristic family '" + family + "'");
  }
  in.finish();
  validate(spec);
  return spec;
}

std::vector<HeuristicSpec> parse_heuristic_list(std::string_view text) {
  // Parameters always contain '=', so a comma-separated item without one
  // starts a new identifier; ';' always separates.
  std::vector<std::string> items;
  std::string current;
  auto flush = [&] {
    if (!trim(current).empty()) items.push_back(trim(current));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find_first_of(",;", pos);
    const std::string_view piece =
        text.substr(pos, next == std::string_view::npos ? text.size() - pos : next - pos);
    const bool is_param = piece.find('=') != std::string_view::npos &&
                          piece.find(':') == std::string_view::npos;
    if (is_param && !current.empty()) {
      current += ",";
      current += piece;
    } else {
      flush();
      current = std::string(piece);
    }
    if (next == std::string_view::npos) break;
    if (text[next] == ';') flush();
    pos = next + 1;
  }
  flush();
  std::vector<HeuristicSpec> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(parse_heuristic(item));
  if (out.empty()) throw SpecError(std::string(text), "empty heuristic list");
  return out;
}

std::string format_heuristic(const HeuristicSpec& spec) {
  return std::visit(
      Overloaded{
          [](const SleepOnlySpec&) { return std::string("sleep"); },
          [](const RandomSpec& s) { return "random:p=" + format_double(s.flip_prob); },
          [](const PeriodicSpec& s) {
            return "periodic:phase=" + std::to_string(s.phase) +
                   ",delay=" + format_delay(s.delay);
          },
          [](const BurstSpec& s) {
            return "burst:phase=" + std::to_string(s.phase) + ",delay=" +
                   format_delay(s.delay) + ",burst=" + std::to_string(s.burst);
          },
          [](const AwakeningSpec& s) { return "awake:lambda=" + format_double(s.lambda); },
          [](const RetaliatingSpec& s) { return "reta:phase=" + std::to_string(s.phase); },
          [](const PeriodicCheckSpec& s) {
            return "pc:phase=" + std::to_string(s.phase) + ",delay=" + format_delay(s.delay);
          },
          [](const PacSpec& s) {
            return "pac:phase=" + std::to_string(s.phase) + ",delay=" + format_delay(s.delay);
          },
      },
      spec);
}

std::string display_name(const HeuristicSpec& spec) {
  auto with_delay = [](std::string base, const Delay& d) {
    if (d) base += ",d=" + std::to_string(*d);
    return base + ")";
  };
  return std::visit(
      Overloaded{
          [](const SleepOnlySpec&) { return std::string("Sleep"); },
          [](const RandomSpec& s) { return "Random(" + format_double(s.flip_prob) + ")"; },
          [&](const PeriodicSpec& s) {
            return with_delay("Periodic(" + std::to_string(s.phase), s.delay);
          },
          [&](const BurstSpec& s) {
            return with_delay("Burst(" + std::to_string(s.phase) + "," +
                                  std::to_string(s.burst),
                              s.delay);
          },
          [](const AwakeningSpec& s) { return "Awake(" + format_double(s.lambda) + ")"; },
          [](const RetaliatingSpec& s) { return "Reta(" + std::to_string(s.phase) + ")"; },
          [&](const PeriodicCheckSpec& s) {
            if (!s.delay) return "PC(" + std::to_string(s.phase) + ",d=random)";
            return with_delay("PC(" + std::to_string(s.phase), s.delay == 0 ? Delay{} : s.delay);
          },
          [&](const PacSpec& s) {
            if (!s.delay) return "PAC(" + std::to_string(s.phase) + ",d=random)";
            const Delay shown = s.delay == 0 ? Delay{} : s.delay;
            if (s.phase == 1 && !shown) return std::string("UPAC");
            return with_delay("PAC(" + std::to_string(s.phase), shown);
          },
      },
      spec);
}

void validate(const HeuristicSpec& spec) {
  auto bad = [&](const std::string& why) {
    throw SpecError(format_heuristic(spec), why + " in '" + format_heuristic(spec) + "'");
  };
  auto check_phase = [&](int phase, const Delay& delay) {
    if (phase < 1) bad("phase must be >= 1");
    if (delay && *delay < 0) bad("delay must be >= 0");
  };
  std::visit(Overloaded{
                 [](const SleepOnlySpec&) {},
                 [&](const RandomSpec& s) {
                   if (!(s.flip_prob >= 0.0 && s.flip_prob <= 1.0)) bad("p must lie in [0, 1]");
                 },
                 [&](const PeriodicSpec& s) { check_phase(s.phase, s.delay); },
                 [&](const BurstSpec& s) {
                   check_phase(s.phase, s.delay);
                   if (s.burst < 1) bad("burst must be >= 1");
                   if (s.burst > s.phase) bad("burst must not exceed phase");
                 },
                 [&](const AwakeningSpec& s) {
                   if (!std::isfinite(s.lambda) || s.lambda <= 0.0) bad("lambda must be finite and > 0");
                 },
                 [&](const RetaliatingSpec& s) { check_phase(s.phase, 0); },
                 [&](const PeriodicCheckSpec& s) { check_phase(s.phase, s.delay); },
                 [&](const PacSpec& s) { check_phase(s.phase, s.delay); },
             },
             spec);
}

bool operator==(const HeuristicSpec& a, const HeuristicSpec& b) {
  return format_heuristic(a) == format_heuristic(b);
}

std::string heuristic_grammar() {
  return "Heuristic identifiers (family:key=value,...; omitted keys take defaults):\n"
         "  sleep                                  never acts\n"
         "  random:p=0.33                          flips with probability p\n"
         "  periodic:phase=4,delay=random          flips every phase steps after delay\n"
         "  burst:phase=8,delay=random,burst=3     burst flips, then phase-1 sleeps\n"
         "  awake:lambda=0.05                      flips w.p. 1-exp(-lambda t)\n"
         "  reta:phase=4                           periodic, phase halves when attacked\n"
         "  pc:phase=4,delay=random                periodic check, flips next slot\n"
         "  pac:phase=4,delay=random               periodic check, flips next step\n"
         "  upac                                   pac with phase 1\n"
         "delay is an integer >= 0 or 'random' (uniform over 0..phase-1 per episode).\n"
         "Lists separate identifiers with ';' or with ',' before a new family name.\n";
}

std::unique_ptr<Policy> make_heuristic(const HeuristicSpec& spec, std::uint64_t seed) {
  validate(spec);
  return std::visit(
      Overloaded{
          [](const SleepOnlySpec&) -> std::unique_ptr<Policy> {
            return std::make_unique<SleepOnlyAgent>();
          },
          [&](const RandomSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<RandomAgent>(s, seed);
          },
          [&](const PeriodicSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<PeriodicAgent>(s, seed);
          },
          [&](const BurstSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<BurstAgent>(s, seed);
          },
          [&](const AwakeningSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<AwakeningAgent>(s, seed);
          },
          [&](const RetaliatingSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<RetaliatingAgent>(s, seed);
          },
          [&](const PeriodicCheckSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<CheckingAgent>(s.phase, s.delay, false, seed);
          },
          [&](const PacSpec& s) -> std::unique_ptr<Policy> {
            return std::make_unique<CheckingAgent>(s.phase, s.delay, true, seed);
          },
      },
      spec);
}

// ---------------------------------------------------------------------------
// Agents

namespace {

int draw_delay(const Delay& delay, int phase, std::uint64_t seed) {
  if (delay) return *delay;
  Rng rng(seed);
  return static_cast<int>(rng.below(static_cast<std::uint64_t>(phase)));
}

}  // namespace

RandomAgent::RandomAgent(RandomSpec spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

Action RandomAgent::act(const PlayerView&) {
  return rng_.bernoulli(spec_.flip_prob) ? Action::flip(0) : Action::sleep();
}

PeriodicAgent::PeriodicAgent(PeriodicSpec spec, std::uint64_t seed) : spec_(spec) {
  reset(seed);
}

void PeriodicAgent::reset(std::uint64_t seed) {
  delay_ = draw_delay(spec_.delay, spec_.phase, seed);
}

Action PeriodicAgent::act(const PlayerView& view) {
  const int t = view.step;
  if (t >= delay_ && (t - delay_) % spec_.phase == 0) return Action::flip(0);
  return Action::sleep();
}

BurstAgent::BurstAgent(BurstSpec spec, std::uint64_t seed) : spec_(spec) { reset(seed); }

void BurstAgent::reset(std::uint64_t seed) {
  delay_ = draw_delay(spec_.delay, spec_.phase, seed);
}

Action BurstAgent::act(const PlayerView& view) {
  const int t = view.step;
  if (t < delay_) return Action::sleep();
  const int cycle = spec_.burst + spec_.phase - 1;
  return (t - delay_) % cycle < spec_.burst ? Action::flip(0) : Action::sleep();
}

AwakeningAgent::AwakeningAgent(AwakeningSpec spec, std::uint64_t seed) : spec_(spec) {
  reset(seed);
}

void AwakeningAgent::reset(std::uint64_t seed) {
  rng_.seed(seed);
  clock_ = 0;
}

double AwakeningAgent::flip_probability(int t) const {
  return 1.0 - std::exp(-spec_.lambda * t);
}

Action AwakeningAgent::act(const PlayerView&) {
  if (rng_.uniform() < flip_probability(clock_)) {
    clock_ = 0;
    return Action::flip(0);
  }
  ++clock_;
  return Action::sleep();
}

RetaliatingAgent::RetaliatingAgent(RetaliatingSpec spec, std::uint64_t seed)
    : spec_(spec) {
  reset(seed);
}

void RetaliatingAgent::reset(std::uint64_t) {
  phase_ = spec_.phase;
  last_flip_.reset();
  previous_flip_.reset();
  pending_review_ = false;
}

Action RetaliatingAgent::act(const PlayerView& view) {
  const auto& k = view.knowledge.resources.front();
  if (pending_review_) {
    // The reveal from our last Flip: did the opponent flip since the one
    // before it?
    const bool attacked =
        k.opponent_flip_step && (!previous_flip_ || *k.opponent_flip_step > *previous_flip_);
    phase_ = attacked ? std::max(min_phase(), phase_ / 2) : std::min(spec_.phase, phase_ + 1);
    pending_review_ = false;
  }
  if (!last_flip_ || view.step - *last_flip_ >= phase_) {
    previous_flip_ = last_flip_;
    last_flip_ = view.step;
    pending_review_ = true;
    return Action::flip(0);
  }
  return Action::sleep();
}

CheckingAgent::CheckingAgent(int phase, Delay delay, bool aggressive, std::uint64_t seed)
    : phase_(phase), delay_spec_(delay), aggressive_(aggressive) {
  reset(seed);
}

void CheckingAgent::reset(std::uint64_t seed) {
  delay_ = draw_delay(delay_spec_, phase_, seed);
  last_check_.reset();
  flip_armed_ = false;
}

std::string CheckingAgent::id() const {
  return std::string(aggressive_ ? "pac" : "pc") + ":phase=" + std::to_string(phase_) +
         ",delay=" + format_delay(delay_spec_);
}

Action CheckingAgent::act(const PlayerView& view) {
  const int t = view.step;
  const auto& k = view.knowledge.resources.front();
  if (last_check_ && k.observed_at == last_check_) {
    if (k.observed_owner == opponent_of(view.knowledge.self)) flip_armed_ = true;
    last_check_.reset();
  }
  if (aggressive_ && flip_armed_) {
    flip_armed_ = false;
    return Action::flip(0);
  }
  if (!on_schedule(t)) return Action::sleep();
  if (flip_armed_) {
    flip_armed_ = false;
    return Action::flip(0);
  }
  last_check_ = t;
  return Action::check(0);
}

}  // namespace poolflip
