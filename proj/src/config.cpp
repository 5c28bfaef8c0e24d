#include "ergotrack/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ergotrack {

using nlohmann::json;

double TargetConfig::scale(double t, double factor_value) const {
  double s = 1.0 + diffusion_ramp * t;
  if (factor) s *= std::exp(loading * factor_value);
  return s;
}

namespace {

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

Matrix matrix_from(const json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(where + ": expected a number or a non-empty array");
  if (!j[0].is_array()) {
    // a flat list is a diagonal
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) fail(where + ": non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return m;
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(where + ": ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) fail(where + ": non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

Vector vector_from(const json& j, const std::string& where) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) fail(where + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(where + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(row);
  }
  return out;
}

json to_json_vec(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(std::string("field '") + key + "': " + e.what());
  }
}

HomogeneousFunction function_from(const json& j, const std::string& where, std::size_t dim) {
  if (!j.is_object() || !j.contains("type")) fail(where + ": expected an object with a type");
  const auto type = j.at("type").get<std::string>();
  const auto d = static_cast<Eigen::Index>(dim);
  auto check_len = [&](Eigen::Index n) {
    if (n != d) fail(where + ": parameter size does not match dim");
  };
  if (type == "quadratic") {
    const Matrix m = j.contains("matrix") ? matrix_from(j.at("matrix"), where) : Matrix::Identity(d, d);
    check_len(m.rows());
    if (m.cols() != d) fail(where + ": matrix must be square");
    return HomogeneousFunction::quadratic(m);
  }
  if (type == "counting") {
    const Vector c = j.contains("constants") ? vector_from(j.at("constants"), where) : Vector::Ones(d);
    check_len(c.size());
    return HomogeneousFunction::counting(c);
  }
  if (type == "indicator") return HomogeneousFunction::indicator(get_or(j, "constant", 1.0));
  if (type == "weighted_l1") {
    const Vector w = j.contains("weights") ? vector_from(j.at("weights"), where) : Vector::Ones(d);
    check_len(w.size());
    return HomogeneousFunction::weighted_l1(w);
  }
  fail(where + ": unknown cost type '" + type + "'");
}

json function_to_json(const HomogeneousFunction& f) {
  using K = HomogeneousFunction::Kind;
  switch (f.kind()) {
    case K::quadratic: return {{"type", "quadratic"}, {"matrix", to_json(f.parameters())}};
    case K::counting: return {{"type", "counting"}, {"constants", to_json_vec(f.parameters().col(0))}};
    case K::indicator: return {{"type", "indicator"}, {"constant", f.parameters()(0, 0)}};
    case K::weighted_l1: return {{"type", "weighted_l1"}, {"weights", to_json_vec(f.parameters().col(0))}};
    case K::custom: break;
  }
  fail("custom cost functions cannot be serialized");
}

TimeWeight weight_from(const json& j, const char* key) {
  if (!j.contains(key)) return TimeWeight::constant(1.0);
  const json& w = j.at(key);
  if (w.is_number()) return TimeWeight::constant(w.get<double>());
  if (!w.is_object()) fail(std::string("weight ") + key + ": expected a number or {level, slope}");
  return TimeWeight{get_or(w, "level", 1.0), get_or(w, "slope", 0.0)};
}

const char* domain_name(DomainType t) {
  switch (t) {
    case DomainType::interval: return "interval";
    case DomainType::ellipsoid: return "ellipsoid";
    case DomainType::optimal_impulse: return "optimal_impulse";
  }
  return "?";
}

const char* direction_name(DirectionField::Kind k) {
  return k == DirectionField::Kind::inward_normal ? "inward_normal" : "radial";
}

}  // namespace

Matrix parse_matrix(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(std::string("matrix: ") + e.what());
  }
  return matrix_from(j, "matrix");
}

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("scenario must be a JSON object");

  Scenario s;
  s.name = get_or<std::string>(j, "name", s.name);
  s.dim = get_or<std::size_t>(j, "dim", 1);
  if (s.dim == 0) fail("dim must be >= 1");
  const auto d = static_cast<Eigen::Index>(s.dim);

  const json target = j.value("target", json::object());
  s.target.drift = target.contains("drift") ? vector_from(target.at("drift"), "target.drift") : Vector::Zero(d);
  s.target.drift_slope = target.contains("drift_slope")
                             ? vector_from(target.at("drift_slope"), "target.drift_slope")
                             : Vector::Zero(d);
  s.target.diffusion = target.contains("diffusion") ? matrix_from(target.at("diffusion"), "target.diffusion")
                                                    : Matrix::Identity(d, d);
  s.target.diffusion_ramp = get_or(target, "diffusion_ramp", 0.0);
  if (s.target.drift.size() != d || s.target.drift_slope.size() != d || s.target.diffusion.rows() != d ||
      s.target.diffusion.cols() != d) {
    fail("target: sizes do not match dim");
  }
  if (target.contains("factor")) {
    const json& f = target.at("factor");
    FactorSpec fs;
    fs.kappa = get_or(f, "kappa", 1.0);
    fs.mean = get_or(f, "mean", 0.0);
    fs.vol = get_or(f, "vol", 0.0);
    fs.initial = get_or(f, "initial", 0.0);
    s.target.factor = fs;
    s.target.loading = get_or(f, "loading", 0.0);
  }

  const json cost = j.value("cost", json::object());
  const HomogeneousFunction D = cost.contains("D")
                                    ? function_from(cost.at("D"), "cost.D", s.dim)
                                    : HomogeneousFunction::quadratic(Matrix::Identity(d, d));
  const HomogeneousFunction Q = cost.contains("Q")
                                    ? function_from(cost.at("Q"), "cost.Q", s.dim)
                                    : HomogeneousFunction::quadratic(Matrix::Identity(d, d));
  const HomogeneousFunction F = cost.contains("F") ? function_from(cost.at("F"), "cost.F", s.dim)
                                                   : HomogeneousFunction::indicator(1.0);
  const HomogeneousFunction P = cost.contains("P") ? function_from(cost.at("P"), "cost.P", s.dim)
                                                   : HomogeneousFunction::weighted_l1(Vector::Zero(d));
  s.cost = CostSpec{D, Q, F, P, weight_from(cost, "r"), weight_from(cost, "l"), weight_from(cost, "k"),
                    weight_from(cost, "h")};
  if (cost.contains("degrees")) {
    for (const auto& [key, val] : cost.at("degrees").items()) {
      if (key != "D" && key != "Q" && key != "F" && key != "P") fail("cost.degrees: unknown term " + key);
      s.declared_degrees[key] = val.get<double>();
    }
  }

  s.beta = get_or(j, "beta", s.beta);

  if (!j.contains("strategy")) fail("missing strategy");
  const json& st = j.at("strategy");
  const auto type = get_or<std::string>(st, "type", "");
  if (type == "impulse") s.strategy.kind = StrategyKind::impulse;
  else if (type == "singular") s.strategy.kind = StrategyKind::singular;
  else if (type == "regular") s.strategy.kind = StrategyKind::regular;
  else fail("strategy.type must be impulse, singular or regular");

  if (s.strategy.kind != StrategyKind::regular) {
    if (!st.contains("domain")) fail("strategy.domain is required for impulse and singular strategies");
    const json& dom = st.at("domain");
    const auto dt = get_or<std::string>(dom, "type", "");
    if (dt == "interval") {
      if (s.dim != 1) fail("interval domains need dim = 1");
      s.strategy.domain = DomainType::interval;
      s.strategy.half_width = get_or(dom, "half_width", 1.0);
      if (!(s.strategy.half_width > 0.0)) fail("interval half_width must be positive");
    } else if (dt == "ellipsoid") {
      s.strategy.domain = DomainType::ellipsoid;
      if (!dom.contains("shape")) fail("ellipsoid domain needs a shape matrix");
      s.strategy.shape = matrix_from(dom.at("shape"), "strategy.domain.shape");
      if (s.strategy.shape.rows() != d || !is_spd(s.strategy.shape)) fail("ellipsoid shape must be SPD of size dim");
    } else if (dt == "optimal_impulse") {
      s.strategy.domain = DomainType::optimal_impulse;
      s.strategy.domain_scale = get_or(dom, "scale", 1.0);
      if (!(s.strategy.domain_scale > 0.0)) fail("optimal_impulse scale must be positive");
    } else {
      fail("strategy.domain.type must be interval, ellipsoid or optimal_impulse");
    }
  }
  if (st.contains("jump")) s.strategy.alpha = get_or(st.at("jump"), "alpha", 1.0);
  const auto dir = get_or<std::string>(st, "direction", "radial");
  if (dir == "radial") s.strategy.direction = DirectionField::Kind::radial;
  else if (dir == "inward_normal") s.strategy.direction = DirectionField::Kind::inward_normal;
  else fail("strategy.direction must be radial or inward_normal");
  if (st.contains("feedback")) {
    const json& fb = st.at("feedback");
    if (fb.is_string()) {
      if (fb.get<std::string>() != "optimal_lq") fail("strategy.feedback: unknown keyword");
      s.strategy.optimal_lq = true;
    } else {
      s.strategy.feedback = matrix_from(fb.is_object() ? fb.at("matrix") : fb, "strategy.feedback");
      if (s.strategy.feedback.rows() != d || s.strategy.feedback.cols() != d) fail("feedback size mismatch");
    }
  }
  s.strategy.theta = get_or(st, "theta", 1.0);
  s.strategy.Theta = get_or(st, "Theta", 1.0);
  if (st.contains("potential")) {
    s.strategy.potential = matrix_from(st.at("potential"), "strategy.potential");
    if (s.strategy.potential.rows() != d) fail("potential size mismatch");
  }

  s.horizon = get_or(j, "horizon", s.horizon);
  if (!(s.horizon > 0.0)) fail("horizon must be positive");
  if (j.contains("epsilon")) {
    s.epsilons = j.at("epsilon").get<std::vector<double>>();
  }
  if (s.epsilons.empty()) fail("epsilon list is empty");
  for (std::size_t i = 0; i < s.epsilons.size(); ++i) {
    if (!(s.epsilons[i] > 0.0 && s.epsilons[i] <= 1.0)) fail("epsilon values must lie in (0, 1]");
    if (i > 0 && !(s.epsilons[i] < s.epsilons[i - 1])) fail("epsilon list must be strictly decreasing");
  }
  s.replications = get_or<std::size_t>(j, "replications", s.replications);
  if (s.replications == 0) fail("replications must be >= 1");
  s.base_seed = get_or<std::uint64_t>(j, "base_seed", s.base_seed);

  const json solver = j.value("solver", json::object());
  SolverConfig& so = s.solver;
  so.n_sub = get_or<std::size_t>(solver, "n_sub", so.n_sub);
  so.bridge_correction = get_or(solver, "bridge_correction", so.bridge_correction);
  so.burn_in = get_or(solver, "burn_in", so.burn_in);
  so.oracle_h = get_or(solver, "oracle_h", so.oracle_h);
  const auto est = get_or<std::string>(solver, "limit_estimator", "oracle");
  if (est == "oracle") so.limit_estimator = LimitEstimator::oracle;
  else if (est == "simulation") so.limit_estimator = LimitEstimator::simulation;
  else fail("solver.limit_estimator must be oracle or simulation");
  so.cross_check = get_or(solver, "cross_check", so.cross_check);
  so.threads = get_or<std::size_t>(solver, "threads", so.threads);
  so.time_points = get_or<std::size_t>(solver, "time_points", so.time_points);
  so.sim_horizon = get_or(solver, "sim_horizon", so.sim_horizon);
  so.sim_replications = get_or<std::size_t>(solver, "sim_replications", so.sim_replications);
  if (so.n_sub == 0) fail("solver.n_sub must be >= 1");
  if (!(so.burn_in >= 0.0 && so.burn_in < 1.0)) fail("solver.burn_in must lie in [0, 1)");
  if (so.time_points < 2) fail("solver.time_points must be >= 2");
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["dim"] = s.dim;
  json target{{"drift", to_json_vec(s.target.drift)},
              {"drift_slope", to_json_vec(s.target.drift_slope)},
              {"diffusion", to_json(s.target.diffusion)},
              {"diffusion_ramp", s.target.diffusion_ramp}};
  if (s.target.factor) {
    const FactorSpec& f = *s.target.factor;
    target["factor"] = {{"kappa", f.kappa}, {"mean", f.mean}, {"vol", f.vol}, {"initial", f.initial},
                        {"loading", s.target.loading}};
  }
  j["target"] = target;
  auto weight = [](const TimeWeight& w) { return json{{"level", w.level}, {"slope", w.slope}}; };
  json cost{{"D", function_to_json(s.cost.D)}, {"Q", function_to_json(s.cost.Q)},
            {"F", function_to_json(s.cost.F)}, {"P", function_to_json(s.cost.P)},
            {"r", weight(s.cost.r)}, {"l", weight(s.cost.l)},
            {"k", weight(s.cost.k)}, {"h", weight(s.cost.h)}};
  if (!s.declared_degrees.empty()) cost["degrees"] = s.declared_degrees;
  j["cost"] = cost;
  j["beta"] = s.beta;

  const StrategyConfig& st = s.strategy;
  json strat{{"type", to_string(st.kind)}};
  if (st.kind != StrategyKind::regular) {
    json dom{{"type", domain_name(st.domain)}};
    if (st.domain == DomainType::interval) dom["half_width"] = st.half_width;
    if (st.domain == DomainType::ellipsoid) dom["shape"] = to_json(st.shape);
    if (st.domain == DomainType::optimal_impulse) dom["scale"] = st.domain_scale;
    strat["domain"] = dom;
  }
  if (st.kind == StrategyKind::impulse) strat["jump"] = {{"alpha", st.alpha}};
  if (st.kind == StrategyKind::singular) strat["direction"] = direction_name(st.direction);
  if (st.optimal_lq) strat["feedback"] = "optimal_lq";
  else if (st.feedback.size() > 0) strat["feedback"] = {{"matrix", to_json(st.feedback)}};
  if (st.kind == StrategyKind::regular) {
    strat["theta"] = st.theta;
    strat["Theta"] = st.Theta;
  }
  if (st.potential.size() > 0) strat["potential"] = to_json(st.potential);
  j["strategy"] = strat;

  j["horizon"] = s.horizon;
  j["epsilon"] = s.epsilons;
  j["replications"] = s.replications;
  j["base_seed"] = s.base_seed;
  const SolverConfig& so = s.solver;
  j["solver"] = {{"n_sub", so.n_sub},
                 {"bridge_correction", so.bridge_correction},
                 {"burn_in", so.burn_in},
                 {"oracle_h", so.oracle_h},
                 {"limit_estimator", so.limit_estimator == LimitEstimator::oracle ? "oracle" : "simulation"},
                 {"cross_check", so.cross_check},
                 {"threads", so.threads},
                 {"time_points", so.time_points},
                 {"sim_horizon", so.sim_horizon},
                 {"sim_replications", so.sim_replications}};
  return j.dump(2);
}

}  // namespace ergotrack
