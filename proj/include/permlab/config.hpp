#ifndef PERMLAB_CONFIG_HPP
#define PERMLAB_CONFIG_HPP

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "permlab/darcy_memory.hpp"
#include "permlab/geometry.hpp"

namespace permlab {

struct RunConfig {
    std::string obstacle_shape = "square";
    double obstacle_extent = 0.25;
    int n_cell = 16;
    double epsilon = 0.125;
    double kappa0 = 2.0;
    double T = 0.125;
    int M = 32;
    double gamma = 1.0; // grading exponent for kernel-only runs
    std::string forcing = "sweep";
    std::vector<double> sweep_epsilon = {0.125, 0.0625, 0.03125};
    std::string output_dir = ".";

    CellGeometry make_cell() const {
        return CellGeometry(obstacle_shape_from_string(obstacle_shape), obstacle_extent, n_cell);
    }
    PerforatedDomain make_domain() const { return PerforatedDomain(make_cell(), epsilon, kappa0); }
    TimeGrid make_grid() const { return TimeGrid(T, M, gamma); }
};

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto grab = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    grab("obstacle_shape", c.obstacle_shape);
    grab("obstacle_extent", c.obstacle_extent);
    grab("n_cell", c.n_cell);
    grab("epsilon", c.epsilon);
    grab("kappa0", c.kappa0);
    grab("T", c.T);
    grab("M", c.M);
    grab("gamma", c.gamma);
    grab("forcing", c.forcing);
    grab("sweep_epsilon", c.sweep_epsilon);
    grab("output_dir", c.output_dir);
    if (c.T <= 0 || c.M < 1) throw config_error("config: need T > 0 and M >= 1");
    if (c.n_cell < 2) throw config_error("config: n_cell too small");
    auto commensurate = [&](double e, const char* key) {
        if (e <= 0 || e > 0.5)
            throw config_error(std::string("config: key '") + key + "' out of range (0, 1/2]");
        double q = 1.0 / e;
        if (std::fabs(q - std::round(q)) > 1e-9 * q)
            throw config_error(std::string("config: key '") + key + "' = " + std::to_string(e) +
                               " is not grid-commensurate (1/epsilon must be an integer)");
    };
    commensurate(c.epsilon, "epsilon");
    for (double e : c.sweep_epsilon) commensurate(e, "sweep_epsilon");
    if (c.sweep_epsilon.empty()) throw config_error("config: key 'sweep_epsilon' must be nonempty");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config: parse failure in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// Named forcing catalogue shared by the CLI and the verification sweep.
inline BodyForce make_forcing(const std::string& name) {
    const double pi = std::acos(-1.0);
    if (name == "zero") return {"zero", [](double, double, double) { return Vec2{0, 0}; }};
    if (name == "swirl")
        return {"swirl", [pi](double x, double y, double t) {
                    double sx = std::sin(pi * x), sy = std::sin(pi * y);
                    double a = 1.0 + 0.5 * t;
                    return Vec2{a * pi * sx * sx * std::sin(2.0 * pi * y),
                                -a * pi * sy * sy * std::sin(2.0 * pi * x)};
                }};
    if (name == "gradient")
        return {"gradient", [pi](double x, double y, double t) {
                    double a = 1.0 + 0.5 * t;
                    return Vec2{a * 2.0 * pi * std::cos(2.0 * pi * x) * std::cos(pi * y),
                                -a * pi * std::sin(2.0 * pi * x) * std::sin(pi * y)};
                }};
    if (name == "sweep")
        return {"sweep", [pi](double x, double y, double t) {
                    double sx = std::sin(pi * x), sy = std::sin(pi * y);
                    double wx = pi * sx * sx * std::sin(2.0 * pi * y);
                    double wy = -pi * sy * sy * std::sin(2.0 * pi * x);
                    double gx = 2.0 * pi * std::cos(2.0 * pi * x) * std::cos(pi * y);
                    double gy = -pi * std::sin(2.0 * pi * x) * std::sin(pi * y);
                    double a = 1.0 + 0.5 * t;
                    return Vec2{a * (wx + 0.5 * gx), a * (wy + 0.5 * gy)};
                }};
    throw config_error("unknown forcing: " + name);
}

} // namespace permlab

#endif
