#include "riskmm_cli/config_io.hpp"

#include <fstream>
#include <stdexcept>

namespace riskmm::cli {

namespace {

Json vec_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const Json& a, int expected) {
  if (!a.is_array() || static_cast<int>(a.size()) != expected)
    throw std::invalid_argument("config: expected an array of " + std::to_string(expected) + " numbers");
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) v[i] = a[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

Json config_to_json(const CorridorConfig& c) {
  Json j;
  j["dt_s"] = c.dt_s;
  j["horizon_steps"] = c.horizon_steps;
  j["branching_steps"] = c.branching_steps;
  j["formulation"] = c.formulation;
  j["gamma"] = c.gamma;
  j["eps_tol"] = c.eps_tol;
  j["max_mm_iters"] = c.max_mm_iters;
  j["inner_tol"] = c.inner_tol;
  j["inner_max_iterations"] = c.inner_max_iterations;
  if (c.loss_decrease_tol.has_value()) j["loss_decrease_tol"] = *c.loss_decrease_tol;

  Json robot;
  robot["init_state"] = vec_to_json(c.robot_init);
  robot["u_lo"] = vec_to_json(c.u_lo);
  robot["u_hi"] = vec_to_json(c.u_hi);
  robot["p_y_box_m"] = vec_to_json(c.p_y_box_m);
  robot["v_x_box_mps"] = vec_to_json(c.v_x_box_mps);
  robot["v_y_box_mps"] = vec_to_json(c.v_y_box_mps);
  robot["v_x_max_mps"] = c.v_x_max_mps;
  j["robot"] = std::move(robot);

  Json human;
  human["v_x_mps"] = c.human_v_x_mps;
  human["y_gain"] = c.human_y_gain;
  human["y_refs_m"] = vec_to_json(c.y_refs_m);
  human["init_p_x_range_m"] = vec_to_json(c.human_init_p_x_range_m);
  human["init_p_y_range_m"] = vec_to_json(c.human_init_p_y_range_m);
  j["human"] = std::move(human);

  Json gate = Json::array();
  for (int r = 0; r < 3; ++r) gate.push_back(vec_to_json(c.gate_matrix.row(r).transpose()));
  j["gate_matrix"] = std::move(gate);

  Json cost;
  cost["q_diag"] = vec_to_json(c.q_diag);
  cost["r_diag"] = vec_to_json(c.r_diag);
  cost["qf_scale"] = c.qf_scale;
  cost["collision_alpha"] = c.collision_alpha;
  cost["collision_beta"] = c.collision_beta;
  cost["collision_kind"] = c.collision_kind;
  cost["collision_power"] = c.collision_power;
  j["cost"] = std::move(cost);

  Json sim;
  sim["steps"] = c.sim_steps;
  sim["repeats"] = c.repeats;
  sim["seed"] = c.seed;
  j["sim"] = std::move(sim);

  j["solve_x_t"] = vec_to_json(c.solve_x_t);
  j["timing"] = c.timing;
  return j;
}

CorridorConfig config_from_json(const Json& j) {
  CorridorConfig c;
  try {
    c.dt_s = j.at("dt_s").get<double>();
    c.horizon_steps = j.at("horizon_steps").get<int>();
    c.branching_steps = j.at("branching_steps").get<int>();
    c.formulation = j.at("formulation").get<std::string>();
    c.gamma = j.at("gamma").get<double>();
    c.eps_tol = j.at("eps_tol").get<double>();
    c.max_mm_iters = j.at("max_mm_iters").get<int>();
    c.inner_tol = j.at("inner_tol").get<double>();
    c.inner_max_iterations = j.at("inner_max_iterations").get<int>();
    if (j.contains("loss_decrease_tol") && !j.at("loss_decrease_tol").is_null())
      c.loss_decrease_tol = j.at("loss_decrease_tol").get<double>();

    const Json& robot = j.at("robot");
    c.robot_init = vec_from_json(robot.at("init_state"), 4);
    c.u_lo = vec_from_json(robot.at("u_lo"), 2);
    c.u_hi = vec_from_json(robot.at("u_hi"), 2);
    c.p_y_box_m = vec_from_json(robot.at("p_y_box_m"), 2);
    c.v_x_box_mps = vec_from_json(robot.at("v_x_box_mps"), 2);
    c.v_y_box_mps = vec_from_json(robot.at("v_y_box_mps"), 2);
    c.v_x_max_mps = robot.at("v_x_max_mps").get<double>();

    const Json& human = j.at("human");
    c.human_v_x_mps = human.at("v_x_mps").get<double>();
    c.human_y_gain = human.at("y_gain").get<double>();
    c.y_refs_m = vec_from_json(human.at("y_refs_m"), 3);
    c.human_init_p_x_range_m = vec_from_json(human.at("init_p_x_range_m"), 2);
    c.human_init_p_y_range_m = vec_from_json(human.at("init_p_y_range_m"), 2);

    const Json& gate = j.at("gate_matrix");
    if (!gate.is_array() || gate.size() != 3)
      throw std::invalid_argument("config: gate_matrix must have 3 rows");
    for (int r = 0; r < 3; ++r) {
      c.gate_matrix.row(r) = vec_from_json(gate[static_cast<std::size_t>(r)], 3).transpose();
    }

    const Json& cost = j.at("cost");
    c.q_diag = vec_from_json(cost.at("q_diag"), 4);
    c.r_diag = vec_from_json(cost.at("r_diag"), 2);
    c.qf_scale = cost.at("qf_scale").get<double>();
    c.collision_alpha = cost.at("collision_alpha").get<double>();
    c.collision_beta = cost.at("collision_beta").get<double>();
    c.collision_kind = cost.at("collision_kind").get<std::string>();
    c.collision_power = cost.at("collision_power").get<double>();

    const Json& sim = j.at("sim");
    c.sim_steps = sim.at("steps").get<int>();
    c.repeats = sim.at("repeats").get<int>();
    c.seed = sim.at("seed").get<std::uint64_t>();

    c.solve_x_t = vec_from_json(j.at("solve_x_t"), 6);
    c.timing = j.at("timing").get<bool>();
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

CorridorConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

void save_config(const CorridorConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("config: cannot write " + path);
  out << config_to_json(config).dump(2) << "\n";
}

CorridorConfig apply_overrides(const CorridorConfig& config,
                               const std::vector<std::string>& assignments) {
  Json j = config_to_json(config);
  for (const std::string& a : assignments) {
    const std::size_t eq = a.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must look like key.path=value: " + a);
    const std::string path = a.substr(0, eq);
    const std::string raw = a.substr(eq + 1);

    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::exception&) {
      value = raw;  // bare strings, e.g. formulation=pessimistic
    }

    Json* node = &j;
    std::size_t begin = 0;
    while (true) {
      const std::size_t dot = path.find('.', begin);
      const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
      if (key.empty()) throw std::invalid_argument("override has an empty key segment: " + a);
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      if (!node->contains(key))
        throw std::invalid_argument("override path not found in config: " + path);
      node = &(*node)[key];
      begin = dot + 1;
    }
  }
  return config_from_json(j);
}

}  // namespace riskmm::cli
