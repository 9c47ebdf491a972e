#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "markfun/matrix_market.hpp"
#include "markfun/measures.hpp"
#include "markfun/sensitivity.hpp"

namespace markfun {

/// One built model: generator plus the default measure ingredients.
struct ModelBundle {
  std::string name;
  std::map<std::string, double> params;
  Generator q;
  StatePartition partition;
  RewardVector reward;
  ProbVector pi0;
  std::vector<std::string> state_labels; // optional, attack model only

  MeasureDefaults defaults() const { return {partition, reward, pi0}; }
};

// ---------------------------------------------------------------------------
// Birth-death queue: states 0..n-1 count waiting clients, service rate rho1
// (left moves), arrival rate rho2 (right moves). Reward r_i = i, pi0 = empty
// queue, down set = the full-buffer state.
// ---------------------------------------------------------------------------

struct QueueModel {
  Index n = 9;
  double rho1 = 1.0;
  double rho2 = 1.0;

  void validate() const {
    if (n < 2) throw ValidationError("queue needs at least 2 slots");
    if (!(rho1 > 0.0) || !(rho2 > 0.0))
      throw ValidationError("queue rates must be positive");
  }
};

inline ModelBundle build_queue(const QueueModel& m) {
  m.validate();
  std::vector<Triplet> ts;
  ts.reserve(static_cast<std::size_t>(2 * m.n));
  for (Index i = 0; i + 1 < m.n; ++i) ts.push_back({i, i + 1, m.rho2});
  for (Index i = 1; i < m.n; ++i) ts.push_back({i, i - 1, m.rho1});
  ModelBundle b;
  b.name = "queue";
  b.params = {{"n", static_cast<double>(m.n)}, {"rho1", m.rho1}, {"rho2", m.rho2}};
  b.q = build_generator(m.n, ts);
  std::vector<Index> up;
  for (Index i = 0; i + 1 < m.n; ++i) up.push_back(i);
  b.partition = make_partition(b.q, up); // "down" = saturated buffer
  b.reward = RewardVector::linear(m.n);
  b.pi0 = ProbVector::point(m.n, 0);
  return b;
}

/// dQ/d(rho2): upper bidiagonal with -1/+1 rows and a zero last row;
/// dQ/d(rho1): the mirrored lower bidiagonal. Q is affine in both rates.
inline DirectionMatrix queue_direction(const QueueModel& m,
                                       const std::string& param) {
  m.validate();
  std::vector<Triplet> ts;
  if (param == "rho2") {
    for (Index i = 0; i + 1 < m.n; ++i) ts.push_back({i, i + 1, 1.0});
  } else if (param == "rho1") {
    for (Index i = 1; i < m.n; ++i) ts.push_back({i, i - 1, 1.0});
  } else {
    throw SpecError("queue has no differentiable parameter '" + param + "'");
  }
  return DirectionMatrix::from_offdiagonal(m.n, ts);
}

// ---------------------------------------------------------------------------
// Telecommunication switching system with detection / reconfiguration.
//
// The state counts failed components i = 0..n and whether the system is in
// normal or detected mode; detected mode exists for i >= 1 only, giving
// 2n+1 states. Transitions:
//   normal_i   -> detected_{i+1}  rate (n-i)*gamma   component failure
//   detected_i -> normal_{i-1}    rate c*delta       covered repair
//   detected_i -> normal_i        rate (1-c)*delta   uncovered switch-back
//   normal_i   -> normal_{i-1}    rate tau (i >= 1)  background repair
// States are interleaved (normal_0, detected_1, normal_1, detected_2, ...)
// so the generator is banded. The down set is the detected states and the
// reward is their indicator; pi0 = all components working.
// ---------------------------------------------------------------------------

struct TelecomModel {
  Index n = 16;
  double c = 0.2;
  double delta = 0.5;
  double gamma = 0.95;
  double tau = 1.0;

  void validate() const {
    if (n < 1) throw ValidationError("telecom needs at least one component");
    if (!(c >= 0.0 && c <= 1.0))
      throw ValidationError("coverage must lie in [0,1]");
    if (!(delta > 0.0) || !(gamma > 0.0) || !(tau > 0.0))
      throw ValidationError("telecom rates must be positive");
  }

  Index normal_state(Index i) const { return 2 * i; }
  Index detected_state(Index i) const { return 2 * i - 1; }
  Index state_count() const { return 2 * n + 1; }
};

namespace detail {

enum class TelecomEdge { Failure, CoveredRepair, UncoveredSwitch, Background };

template <typename Emit>
void telecom_transitions(const TelecomModel& m, Emit&& emit) {
  for (Index i = 0; i < m.n; ++i)
    emit(m.normal_state(i), m.detected_state(i + 1),
         static_cast<double>(m.n - i), TelecomEdge::Failure);
  for (Index i = 1; i <= m.n; ++i) {
    emit(m.detected_state(i), m.normal_state(i - 1), 1.0,
         TelecomEdge::CoveredRepair);
    emit(m.detected_state(i), m.normal_state(i), 1.0,
         TelecomEdge::UncoveredSwitch);
  }
  for (Index i = 1; i <= m.n; ++i)
    emit(m.normal_state(i), m.normal_state(i - 1), 1.0,
         TelecomEdge::Background);
}

inline double telecom_rate(const TelecomModel& m, TelecomEdge e) {
  switch (e) {
    case TelecomEdge::Failure: return m.gamma;
    case TelecomEdge::CoveredRepair: return m.c * m.delta;
    case TelecomEdge::UncoveredSwitch: return (1.0 - m.c) * m.delta;
    case TelecomEdge::Background: return m.tau;
  }
  return 0.0;
}

} // namespace detail

inline ModelBundle build_telecom(const TelecomModel& m) {
  m.validate();
  std::vector<Triplet> ts;
  detail::telecom_transitions(
      m, [&](Index from, Index to, double factor, detail::TelecomEdge e) {
        const double r = factor * detail::telecom_rate(m, e);
        if (r != 0.0) ts.push_back({from, to, r});
      });
  ModelBundle b;
  b.name = "telecom";
  b.params = {{"n", static_cast<double>(m.n)},
              {"c", m.c},
              {"delta", m.delta},
              {"gamma", m.gamma},
              {"tau", m.tau}};
  b.q = build_generator(m.state_count(), ts);
  std::vector<Index> up;
  for (Index i = 0; i <= m.n; ++i) up.push_back(m.normal_state(i));
  b.partition = make_partition(b.q, up); // down = detected states
  b.reward = RewardVector{Vector::Ones(b.q.size()) -
                          b.partition.up_indicator(b.q.size())};
  b.pi0 = ProbVector::point(b.q.size(), m.normal_state(0));
  return b;
}

/// Analytic derivative of the telecom generator with respect to one rate
/// parameter. Q is affine in gamma, delta, tau and c separately.
inline DirectionMatrix telecom_direction(const TelecomModel& m,
                                         const std::string& param) {
  m.validate();
  if (param != "gamma" && param != "delta" && param != "tau" && param != "c")
    throw SpecError("telecom has no differentiable parameter '" + param + "'");
  std::vector<Triplet> ts;
  detail::telecom_transitions(
      m, [&](Index from, Index to, double factor, detail::TelecomEdge e) {
        double d = 0.0;
        using detail::TelecomEdge;
        if (param == "gamma" && e == TelecomEdge::Failure) d = factor;
        if (param == "tau" && e == TelecomEdge::Background) d = factor;
        if (param == "delta") {
          if (e == TelecomEdge::CoveredRepair) d = factor * m.c;
          if (e == TelecomEdge::UncoveredSwitch) d = factor * (1.0 - m.c);
        }
        if (param == "c") {
          if (e == TelecomEdge::CoveredRepair) d = factor * m.delta;
          if (e == TelecomEdge::UncoveredSwitch) d = -factor * m.delta;
        }
        if (d != 0.0) ts.push_back({from, to, d});
      });
  return DirectionMatrix::from_offdiagonal(m.state_count(), ts);
}

// ---------------------------------------------------------------------------
// Attack model on N communicating nodes: state (g, b, e, f) counts good, bad
// and evicted nodes plus the failed flag. Transitions (in BFS neighbor
// order):
//   capture   (g,b,e,0) -> (g-1,b+1,e,0)  rate g*lambda_c            [g>=1]
//   detect    (g,b,e,0) -> (g,b-1,e+1,0)  rate b*(1-P_fn)/T_IDS      [b>=1]
//   false pos (g,b,e,0) -> (g-1,b,e+1,0)  rate g*P_fp/T_IDS          [g>=1]
//   breach    (g,b,e,0) -> (0,0,e,1)      rate b*p_a*lambda_f        [b>=1]
// Failed states are absorbing and keep their eviction count. The reward is
// the indicator of {g >= 2b, f = 0} (consensus still possible), pi0 is the
// all-good state, and the down set is the failed states.
// ---------------------------------------------------------------------------

struct AttackModel {
  Index N = 3;
  double p_a = 0.7;
  double P_fn = 0.1;
  double P_fp = 0.1;
  double T_IDS = 15.0;
  double lambda_c = 0.1;
  double lambda_f = 0.2;

  void validate() const {
    if (N < 1) throw ValidationError("attack model needs at least one node");
    if (!(p_a >= 0.0 && p_a <= 1.0) || !(P_fn >= 0.0 && P_fn <= 1.0) ||
        !(P_fp >= 0.0 && P_fp <= 1.0))
      throw ValidationError("attack probabilities must lie in [0,1]");
    if (!(T_IDS > 0.0)) throw ValidationError("detection period must be positive");
    if (!(lambda_c > 0.0) || !(lambda_f > 0.0))
      throw ValidationError("attack rates must be positive");
  }

  /// (N+1)(N+2)/2 live states plus N distinct failed states.
  Index expected_state_count() const { return (N + 1) * (N + 2) / 2 + N; }
};

namespace detail {

struct AttackState {
  Index g = 0, b = 0, e = 0, f = 0;
  bool operator==(const AttackState&) const = default;
  auto operator<=>(const AttackState&) const = default;
};

struct AttackSpace {
  std::vector<AttackState> states; // BFS discovery order
  std::vector<Triplet> rates;
};

/// Deterministic BFS from (N,0,0,0); neighbor order is capture, detect,
/// false positive, breach so the sparsity pattern is reproducible.
inline AttackSpace attack_reachability(const AttackModel& m) {
  AttackSpace space;
  std::map<AttackState, Index> index;
  auto intern = [&](const AttackState& s) {
    auto it = index.find(s);
    if (it != index.end()) return it->second;
    const Index id = static_cast<Index>(space.states.size());
    index.emplace(s, id);
    space.states.push_back(s);
    return id;
  };
  intern({m.N, 0, 0, 0});
  for (std::size_t head = 0; head < space.states.size(); ++head) {
    const AttackState s = space.states[head];
    const Index from = static_cast<Index>(head);
    if (s.f == 1) continue; // failed states are absorbing
    const double g = static_cast<double>(s.g);
    const double b = static_cast<double>(s.b);
    if (s.g >= 1)
      space.rates.push_back(
          {from, intern({s.g - 1, s.b + 1, s.e, 0}), g * m.lambda_c});
    if (s.b >= 1)
      space.rates.push_back({from, intern({s.g, s.b - 1, s.e + 1, 0}),
                             b * (1.0 - m.P_fn) / m.T_IDS});
    if (s.g >= 1)
      space.rates.push_back(
          {from, intern({s.g - 1, s.b, s.e + 1, 0}), g * m.P_fp / m.T_IDS});
    if (s.b >= 1)
      space.rates.push_back(
          {from, intern({0, 0, s.e, 1}), b * m.p_a * m.lambda_f});
  }
  return space;
}

} // namespace detail

inline ModelBundle build_attack(const AttackModel& m) {
  m.validate();
  const detail::AttackSpace space = detail::attack_reachability(m);
  const Index n = static_cast<Index>(space.states.size());
  ModelBundle b;
  b.name = "attack";
  b.params = {{"N", static_cast<double>(m.N)}, {"p_a", m.p_a},
              {"P_fn", m.P_fn},                {"P_fp", m.P_fp},
              {"T_IDS", m.T_IDS},              {"lambda_c", m.lambda_c},
              {"lambda_f", m.lambda_f}};
  b.q = build_generator(n, space.rates);
  std::vector<Index> up;
  Vector reward = Vector::Zero(n);
  b.state_labels.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& s = space.states[i];
    if (s.f == 0) up.push_back(i);
    if (s.g >= 2 * s.b && s.f == 0) reward[i] = 1.0;
    std::ostringstream label;
    label << "(" << s.g << "," << s.b << "," << s.e << "," << s.f << ")";
    b.state_labels.push_back(label.str());
  }
  b.partition = make_partition(b.q, up); // down = failed states
  b.reward = RewardVector{reward};
  b.pi0 = ProbVector::point(n, 0);
  return b;
}

/// Analytic derivative of the attack generator. All rates are affine in each
/// parameter except T_IDS, which enters as 1/T_IDS: its direction is the
/// detection pattern scaled by -1/T_IDS^2.
inline DirectionMatrix attack_direction(const AttackModel& m,
                                        const std::string& param) {
  m.validate();
  const detail::AttackSpace space = detail::attack_reachability(m);
  const Index n = static_cast<Index>(space.states.size());
  std::map<detail::AttackState, Index> index;
  for (Index i = 0; i < n; ++i) index.emplace(space.states[i], i);
  auto find = [&](const detail::AttackState& target) {
    auto it = index.find(target);
    if (it == index.end()) throw SpecError("attack state not found");
    return it->second;
  };
  std::vector<Triplet> ts;
  for (std::size_t head = 0; head < space.states.size(); ++head) {
    const auto& s = space.states[head];
    if (s.f == 1) continue;
    const double g = static_cast<double>(s.g);
    const double b = static_cast<double>(s.b);
    const Index from = static_cast<Index>(head);
    double d;
    if (s.g >= 1) {
      d = 0.0;
      if (param == "lambda_c") d = g;
      if (d != 0.0) ts.push_back({from, find({s.g - 1, s.b + 1, s.e, 0}), d});
    }
    if (s.b >= 1) {
      d = 0.0;
      if (param == "P_fn") d = -b / m.T_IDS;
      if (param == "T_IDS") d = -b * (1.0 - m.P_fn) / (m.T_IDS * m.T_IDS);
      if (d != 0.0) ts.push_back({from, find({s.g, s.b - 1, s.e + 1, 0}), d});
    }
    if (s.g >= 1) {
      d = 0.0;
      if (param == "P_fp") d = g / m.T_IDS;
      if (param == "T_IDS") d = -g * m.P_fp / (m.T_IDS * m.T_IDS);
      if (d != 0.0) ts.push_back({from, find({s.g - 1, s.b, s.e + 1, 0}), d});
    }
    if (s.b >= 1) {
      d = 0.0;
      if (param == "p_a") d = b * m.lambda_f;
      if (param == "lambda_f") d = b * m.p_a;
      if (d != 0.0) ts.push_back({from, find({0, 0, s.e, 1}), d});
    }
  }
  static const std::vector<std::string> known = {
      "lambda_c", "lambda_f", "p_a", "P_fn", "P_fp", "T_IDS"};
  if (std::find(known.begin(), known.end(), param) == known.end())
    throw SpecError("attack model has no differentiable parameter '" + param +
                    "'");
  return DirectionMatrix::from_offdiagonal(n, ts);
}

// ---------------------------------------------------------------------------
// Name-based dispatch used by the CLI.
// ---------------------------------------------------------------------------

namespace detail {

inline double param_or(const std::map<std::string, double>& params,
                       const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

inline QueueModel queue_from_params(const std::map<std::string, double>& p) {
  QueueModel m;
  m.n = static_cast<Index>(param_or(p, "n", static_cast<double>(m.n)));
  m.rho1 = param_or(p, "rho1", m.rho1);
  m.rho2 = param_or(p, "rho2", m.rho2);
  return m;
}

inline TelecomModel telecom_from_params(const std::map<std::string, double>& p) {
  TelecomModel m;
  m.n = static_cast<Index>(param_or(p, "n", static_cast<double>(m.n)));
  m.c = param_or(p, "c", m.c);
  m.delta = param_or(p, "delta", m.delta);
  m.gamma = param_or(p, "gamma", m.gamma);
  m.tau = param_or(p, "tau", m.tau);
  return m;
}

inline AttackModel attack_from_params(const std::map<std::string, double>& p) {
  AttackModel m;
  m.N = static_cast<Index>(param_or(p, "N", static_cast<double>(m.N)));
  m.p_a = param_or(p, "p_a", m.p_a);
  m.P_fn = param_or(p, "P_fn", m.P_fn);
  m.P_fp = param_or(p, "P_fp", m.P_fp);
  m.T_IDS = param_or(p, "T_IDS", m.T_IDS);
  m.lambda_c = param_or(p, "lambda_c", m.lambda_c);
  m.lambda_f = param_or(p, "lambda_f", m.lambda_f);
  return m;
}

} // namespace detail

inline ModelBundle build_model(const std::string& name,
                               const std::map<std::string, double>& params = {}) {
  if (name == "queue") return build_queue(detail::queue_from_params(params));
  if (name == "telecom")
    return build_telecom(detail::telecom_from_params(params));
  if (name == "attack") return build_attack(detail::attack_from_params(params));
  throw SpecError("unknown model '" + name + "' (expected queue, telecom or "
                  "attack)");
}

inline DirectionMatrix model_direction(const std::string& name,
                                       const std::map<std::string, double>& params,
                                       const std::string& param) {
  if (name == "queue")
    return queue_direction(detail::queue_from_params(params), param);
  if (name == "telecom")
    return telecom_direction(detail::telecom_from_params(params), param);
  if (name == "attack")
    return attack_direction(detail::attack_from_params(params), param);
  throw SpecError("unknown model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Export / import: Matrix Market file plus a JSON sidecar with the partition,
// reward, pi0 and model metadata.
// ---------------------------------------------------------------------------

inline void export_model(const ModelBundle& b, const std::string& prefix) {
  write_generator(prefix + ".mtx", b.q, b.name + " generator");
  nlohmann::json j;
  j["model"] = b.name;
  j["n"] = b.q.size();
  j["params"] = b.params;
  j["up_states"] = b.partition.up;
  j["absorbing_down"] = b.partition.absorbing_down;
  j["reward"] = std::vector<double>(
      b.reward.entries.data(), b.reward.entries.data() + b.reward.size());
  j["pi0"] = std::vector<double>(
      b.pi0.entries.data(), b.pi0.entries.data() + b.pi0.size());
  if (!b.state_labels.empty()) j["state_labels"] = b.state_labels;
  std::ofstream out(prefix + ".json");
  if (!out) throw IoError("cannot open " + prefix + ".json for writing");
  out << j.dump(2) << "\n";
}

inline ModelBundle import_model(const std::string& matrix_path,
                                const std::string& sidecar_path) {
  ModelBundle b;
  GeneratorReadResult r = read_generator(matrix_path);
  b.q = r.generator;

  std::ifstream in(sidecar_path);
  if (!in) throw IoError("cannot open " + sidecar_path);
  nlohmann::json j;
  in >> j;
  b.name = j.value("model", std::string("external"));
  if (j.contains("params"))
    b.params = j.at("params").get<std::map<std::string, double>>();
  if (j.contains("up_states"))
    b.partition = make_partition(b.q, j.at("up_states").get<std::vector<Index>>());
  else
    b.partition = make_partition(b.q, {});
  if (j.contains("reward")) {
    auto vals = j.at("reward").get<std::vector<double>>();
    if (static_cast<Index>(vals.size()) != b.q.size())
      throw ValidationError("sidecar reward dimension mismatch");
    b.reward = RewardVector::validated(
        Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size())));
  } else {
    b.reward = RewardVector{Vector::Ones(b.q.size())};
  }
  if (j.contains("pi0")) {
    auto vals = j.at("pi0").get<std::vector<double>>();
    if (static_cast<Index>(vals.size()) != b.q.size())
      throw ValidationError("sidecar pi0 dimension mismatch");
    b.pi0 = ProbVector::validated(
        Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size())));
  } else {
    b.pi0 = ProbVector::point(b.q.size(), 0);
  }
  if (j.contains("state_labels"))
    b.state_labels = j.at("state_labels").get<std::vector<std::string>>();
  return b;
}

} // namespace markfun
