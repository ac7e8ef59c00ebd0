#pragma once

#include "jmf/io.hpp"
#include "jmf/model.hpp"
#include "jmf/predict.hpp"
#include "jmf/synthgen.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace jmf::artifacts {

using nlohmann::json;
namespace fs = std::filesystem;

inline json shape(const Matrix& m)
{
    return json::array({m.rows(), m.cols()});
}

inline json file_entry(const std::string& path, const std::string& role, const Matrix& m)
{
    return {{"path", path}, {"role", role}, {"shape", shape(m)}};
}

/// Writes X_i, W0, H0_i, theta_i, R_i_j and a manifest.json describing them,
/// plus truth_model.json (the ground truth as a trained model).
inline json write_generated(const GroundTruth& gt, const fs::path& dir)
{
    fs::create_directories(dir);
    json files = json::array();
    auto put = [&](const std::string& name, const std::string& role, const Matrix& m, json extra = json::object()) {
        io::write_matrix(dir / name, m);
        json e = file_entry(name, role, m);
        e.update(extra);
        files.push_back(e);
    };
    for (std::size_t i = 0; i < gt.X.size(); ++i) {
        put("X_" + std::to_string(i) + ".csv", "data", gt.X[i], {{"view", i}});
    }
    put("W0.csv", "basis_truth", gt.W0);
    for (std::size_t i = 0; i < gt.H0.size(); ++i) {
        put("H0_" + std::to_string(i) + ".csv", "coefficients_truth", gt.H0[i], {{"view", i}});
    }
    for (std::size_t i = 0; i < gt.constraints.within.size(); ++i) {
        for (std::size_t t = 0; t < gt.constraints.within[i].size(); ++t) {
            put("theta_" + std::to_string(i) + (t ? "_" + std::to_string(t) : "") + ".csv", "within",
                gt.constraints.within[i][t], {{"view", i}});
        }
    }
    for (const auto& [key, r] : gt.constraints.between) {
        put("R_" + std::to_string(key.first) + "_" + std::to_string(key.second) + ".csv", "between", r,
            {{"i", key.first}, {"j", key.second}});
    }
    json spec{{"dataset", to_string(gt.spec.dataset)},
              {"noise", gt.noise},
              {"seed", gt.spec.seed},
              {"constraint_noise", gt.spec.constraint_noise}};
    json manifest{{"spec", spec},
                  {"seed", gt.spec.seed},
                  {"rank", gt.rank()},
                  {"bernoulli_redraws", gt.bernoulli_redraws},
                  {"bernoulli_left_zero", gt.bernoulli_left_zero},
                  {"files", files}};
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    json model{{"params", {{"rank", gt.rank()}, {"lambda1", 0.0}, {"lambda2", 0.0}, {"gamma1", 0.0}, {"gamma2", 0.0}}},
               {"algorithm", "PANLS"},
               {"stop_rule", "ObjectiveRatio"},
               {"seed", gt.spec.seed},
               {"W", "W0.csv"},
               {"H", json::array()}};
    for (std::size_t i = 0; i < gt.H0.size(); ++i) {
        model["H"].push_back("H0_" + std::to_string(i) + ".csv");
    }
    io::write_text(dir / "truth_model.json", model.dump(2) + "\n");
    return manifest;
}

/// Data, constraints and (when the manifest lists W0 and every H0_i) the
/// ground truth read back from a manifest.
struct LoadedManifest {
    MultiViewDataset dataset;
    ConstraintSet constraints;
    std::optional<GroundTruth> truth;
};

inline json read_json(const fs::path& path)
{
    try {
        return json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw io::IoError(path.string() + ": " + e.what());
    }
}

inline LoadedManifest load_manifest(const fs::path& path)
{
    const json m = read_json(path);
    const fs::path base = path.parent_path();
    std::vector<Matrix> views;
    std::vector<Matrix> h0;
    std::optional<Matrix> w0;
    ConstraintSet cs;
    for (const auto& f : m.at("files")) {
        const std::string role = f.at("role").get<std::string>();
        const Matrix mat = io::read_matrix(base / f.at("path").get<std::string>());
        auto at_view = [&](std::vector<Matrix>& out) {
            const auto v = f.at("view").get<std::size_t>();
            if (out.size() <= v) {
                out.resize(v + 1);
            }
            out[v] = mat;
        };
        if (role == "data") {
            at_view(views);
        } else if (role == "basis_truth") {
            w0 = mat;
        } else if (role == "coefficients_truth") {
            at_view(h0);
        } else if (role == "within") {
            const auto v = f.at("view").get<std::size_t>();
            if (cs.within.size() <= v) {
                cs.within.resize(v + 1);
            }
            cs.within[v].push_back(mat);
        } else if (role == "between") {
            cs.between[{f.at("i").get<std::size_t>(), f.at("j").get<std::size_t>()}] = mat;
        }
    }
    LoadedManifest out;
    out.dataset = MultiViewDataset(views);
    out.constraints = std::move(cs);
    if (w0 && h0.size() == views.size()) {
        GroundTruth gt;
        gt.W0 = *w0;
        gt.H0 = std::move(h0);
        gt.X = std::move(views);
        gt.constraints = out.constraints;
        if (m.contains("spec") && m.at("spec").contains("noise")) {
            gt.noise = m.at("spec").at("noise").get<double>();
        }
        out.truth = std::move(gt);
    }
    return out;
}

inline json params_json(const Hyperparameters& p)
{
    return {{"rank", p.rank}, {"lambda1", p.lambda1}, {"lambda2", p.lambda2}, {"gamma1", p.gamma1},
            {"gamma2", p.gamma2}};
}

/// model.json next to W.csv and H_i.csv in `dir`.
inline void save_model(const TrainedModel& model, const fs::path& dir)
{
    fs::create_directories(dir);
    io::write_matrix(dir / "W.csv", model.factors.W);
    json hs = json::array();
    for (std::size_t i = 0; i < model.factors.H.size(); ++i) {
        const std::string name = "H_" + std::to_string(i) + ".csv";
        io::write_matrix(dir / name, model.factors.H[i]);
        hs.push_back(name);
    }
    json j{{"params", params_json(model.params)},
           {"algorithm", to_string(model.algorithm)},
           {"stop_rule", to_string(model.stop_rule)},
           {"seed", model.seed},
           {"W", "W.csv"},
           {"H", hs}};
    io::write_text(dir / "model.json", j.dump(2) + "\n");
}

inline TrainedModel load_model(const fs::path& path)
{
    const json j = read_json(path);
    const fs::path base = path.parent_path();
    TrainedModel m;
    try {
        const json& p = j.at("params");
        m.params.rank = p.at("rank").get<Index>();
        m.params.lambda1 = p.value("lambda1", 0.0);
        m.params.lambda2 = p.value("lambda2", 0.0);
        m.params.gamma1 = p.value("gamma1", 0.0);
        m.params.gamma2 = p.value("gamma2", 0.0);
        m.algorithm = parse_algorithm(j.value("algorithm", std::string("PANLS")));
        m.stop_rule = parse_stop_rule(j.value("stop_rule", std::string("ObjectiveRatio")));
        m.seed = j.value("seed", std::uint64_t{0});
        m.factors.W = io::read_matrix(base / j.at("W").get<std::string>());
        for (const auto& h : j.at("H")) {
            m.factors.H.push_back(io::read_matrix(base / h.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw io::IoError(path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

} // namespace jmf::artifacts
