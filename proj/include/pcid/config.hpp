#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcid/errors.hpp"
#include "pcid/harness.hpp"
#include "pcid/matrix.hpp"
#include "pcid/signals.hpp"

namespace pcid {

using Json = nlohmann::json;

/// Raised by the config loader. `kind` separates the failure classes so the
/// command line can map them to exit codes; `problems` lists every violation.
class ConfigError : public Error {
public:
    enum class Kind { file, parse, schema, invariant };

    ConfigError(Kind kind, std::vector<std::string> problems)
        : Error(join(kind, problems)), kind_(kind), problems_(std::move(problems)) {}

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::file: return "file";
            case Kind::parse: return "parse";
            case Kind::schema: return "schema";
            case Kind::invariant: return "invariant";
        }
        return "config";
    }

private:
    static std::string join(Kind k, const std::vector<std::string>& problems) {
        std::string s = std::string(kind_name(k)) + " error";
        for (const auto& p : problems) {
            s += "; " + p;
        }
        return s;
    }

    Kind kind_;
    std::vector<std::string> problems_;
};

/// A scenario plus the output settings that do not affect the simulation.
struct ResolvedConfig {
    ScenarioConfig scenario;
    std::size_t decimate = 100;
};

// --------------------------------------------------------------------------
// Serialization

inline Json matrix_to_json(const Matrix& m) {
    if (m.cols() == 1) {
        Json a = Json::array();
        for (std::size_t i = 0; i < m.rows(); ++i) {
            a.push_back(m(i, 0));
        }
        return a;
    }
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) {
            r.push_back(m(i, j));
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline const char* to_string(DetectorKind k) { return k == DetectorKind::exact ? "exact" : "robust"; }

inline const char* to_string(DisturbanceKind k) {
    switch (k) {
        case DisturbanceKind::none: return "none";
        case DisturbanceKind::uniform_noise: return "uniform_noise";
        case DisturbanceKind::uniform_plus_harmonic: return "uniform_plus_harmonic";
    }
    return "none";
}

inline const char* to_string(RegressorTerm::Type t) {
    switch (t) {
        case RegressorTerm::Type::constant: return "constant";
        case RegressorTerm::Type::exp: return "exp";
        case RegressorTerm::Type::sin: return "sin";
        case RegressorTerm::Type::cos: return "cos";
    }
    return "constant";
}

/// The fully resolved configuration in the same schema the loader accepts.
inline Json to_json(const ResolvedConfig& rc) {
    const ScenarioConfig& c = rc.scenario;
    Json j;
    j["scenario"] = to_string(c.kind);
    j["t0"] = c.t0;
    j["horizon"] = c.horizon;
    j["dt"] = c.dt;
    j["seed"] = c.seed;
    j["decimate"] = rc.decimate;
    j["sigma"] = c.est.sigma;
    j["k"] = c.est.k;
    j["gamma0"] = c.est.gamma0;
    j["rho"] = c.est.rho;
    j["delta_pr"] = c.est.delta_pr;
    j["detector"] = to_string(c.est.detector);
    j["eta_rel"] = c.est.eta_rel;
    j["eta_abs"] = c.est.eta_abs;
    j["eta_floor"] = c.est.eta_floor;
    j["window"] = c.est.window;
    j["min_fill"] = c.est.min_fill;
    j["spread_coeff"] = c.est.spread_coeff;
    j["w_max"] = c.est.w_max;
    j["excitation_fraction"] = c.excitation_fraction;
    j["settle"] = c.settle;
    j["bound_settle"] = c.bound_settle;
    j["disturbance"] = {{"kind", to_string(c.disturbance.kind)},
                        {"noise_amplitude", c.disturbance.noise_amplitude},
                        {"harmonic_amplitude", c.disturbance.harmonic_amplitude},
                        {"harmonic_frequency", c.disturbance.harmonic_frequency},
                        {"w_max", c.disturbance.w_max}};
    Json models = Json::array();
    for (const Matrix& m : c.models) {
        models.push_back(matrix_to_json(m));
    }
    j["models"] = models;
    Json seq = Json::array();
    for (const auto& [label, start] : c.sequence) {
        seq.push_back({{"model", label}, {"start", start}});
    }
    j["sequence"] = seq;
    Json reg = Json::array();
    for (const RegressorTerm& r : c.regressor) {
        reg.push_back({{"type", to_string(r.type)}, {"a", r.a}, {"b", r.b}});
    }
    j["regressor"] = reg;
    j["theta0"] = matrix_to_json(c.theta0);
    if (c.plant) {
        const PlantParams& p = *c.plant;
        Json a = Json::array();
        Json b = Json::array();
        for (const Matrix& m : p.a) {
            a.push_back(matrix_to_json(m));
        }
        for (const Matrix& m : p.b) {
            b.push_back(matrix_to_json(m));
        }
        j["plant"] = {{"A", a},
                      {"B", b},
                      {"x0", matrix_to_json(p.x0)},
                      {"Kx", matrix_to_json(p.kx)},
                      {"Kr", matrix_to_json(p.kr)},
                      {"r",
                       {{"kind", p.r.kind == Reference::Kind::constant ? "constant" : "sinusoid"},
                        {"offset", matrix_to_json(p.r.offset)},
                        {"amplitude", matrix_to_json(p.r.amplitude)},
                        {"frequency", p.r.frequency}}},
                      {"l", p.l},
                      {"decay", p.decay == DecayMode::euler ? "euler" : "exact"}};
    } else {
        j["plant"] = nullptr;
    }
    j["laws"] = {{"proposed", c.laws.proposed},
                 {"gradient", c.laws.gradient},
                 {"concurrent", c.laws.concurrent},
                 {"purging", c.laws.purging},
                 {"efficient_drem", c.laws.efficient_drem}};
    j["gradient"] = {{"gain", c.gradient.gain}};
    j["concurrent"] = {{"gamma1", c.concurrent.gamma1},
                       {"gamma2", c.concurrent.gamma2},
                       {"record_times", c.concurrent.record_times}};
    j["purging"] = {{"gamma", c.purging.gamma},         {"c1", c.purging.c1},
                    {"c2", c.purging.c2},               {"c3", c.purging.c3},
                    {"stack_len", c.purging.stack_len}, {"spacing_steps", c.purging.spacing_steps}};
    j["efficient_drem"] = {{"l0", c.efficient_drem.l0},
                           {"lambda_lb", c.efficient_drem.lambda_lb},
                           {"lambda_ub", c.efficient_drem.lambda_ub},
                           {"gamma0", c.efficient_drem.gamma0},
                           {"reset_at_true_switches", c.efficient_drem.reset_at_true_switches}};
    return j;
}

// --------------------------------------------------------------------------
// Loading

namespace detail {

/// Walks one JSON object, reading known keys and recording schema problems.
class ObjectReader {
public:
    ObjectReader(const Json& obj, std::string path, std::vector<std::string>& problems)
        : obj_(obj), path_(std::move(path)), problems_(problems) {
        if (!obj_.is_object()) {
            problems_.push_back(where("") + " must be an object");
        }
    }

    /// Reports every key that no reader asked for. Call after all reads.
    void finish() {
        if (!obj_.is_object()) {
            return;
        }
        for (const auto& item : obj_.items()) {
            if (seen_.count(item.key()) == 0) {
                problems_.push_back("unknown key '" + where(item.key()) + "'");
            }
        }
    }

    const Json* find(const std::string& key) {
        seen_[key] = true;
        if (!obj_.is_object()) {
            return nullptr;
        }
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out) {
        if (const Json* v = find(key)) {
            if (v->is_number()) {
                out = v->get<double>();
            } else {
                bad(key, "a number");
            }
        }
    }

    void count(const std::string& key, std::size_t& out) {
        if (const Json* v = find(key)) {
            if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
                out = v->get<std::size_t>();
            } else {
                bad(key, "a non-negative integer");
            }
        }
    }

    void seed(const std::string& key, std::uint64_t& out) {
        if (const Json* v = find(key)) {
            if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
                out = v->get<std::uint64_t>();
            } else {
                bad(key, "a non-negative integer");
            }
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const Json* v = find(key)) {
            if (v->is_boolean()) {
                out = v->get<bool>();
            } else {
                bad(key, "a boolean");
            }
        }
    }

    template <typename E>
    void choice(const std::string& key, E& out, const std::vector<std::pair<std::string, E>>& options) {
        if (const Json* v = find(key)) {
            if (v->is_string()) {
                for (const auto& [name, value] : options) {
                    if (v->get<std::string>() == name) {
                        out = value;
                        return;
                    }
                }
            }
            std::string names;
            for (const auto& o : options) {
                names += (names.empty() ? "" : ", ") + o.first;
            }
            bad(key, "one of {" + names + "}");
        }
    }

    void matrix(const std::string& key, Matrix& out) {
        if (const Json* v = find(key)) {
            parse_matrix(*v, where(key), out);
        }
    }

    void matrix_list(const std::string& key, std::vector<Matrix>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) {
                bad(key, "a list of matrices");
                return;
            }
            std::vector<Matrix> ms;
            for (std::size_t i = 0; i < v->size(); ++i) {
                Matrix m;
                if (parse_matrix((*v)[i], where(key) + "[" + std::to_string(i) + "]", m)) {
                    ms.push_back(std::move(m));
                }
            }
            out = std::move(ms);
        }
    }

    bool parse_matrix(const Json& v, const std::string& at, Matrix& out) {
        const std::string msg = at + " must be a list of numbers or a list of equal-length rows";
        if (!v.is_array()) {
            problems_.push_back(msg);
            return false;
        }
        if (v.empty()) {
            out = Matrix();
            return true;
        }
        if (v.front().is_number()) {
            std::vector<double> col;
            for (const Json& e : v) {
                if (!e.is_number()) {
                    problems_.push_back(msg);
                    return false;
                }
                col.push_back(e.get<double>());
            }
            const std::size_t n = col.size();
            out = Matrix(n, 1, std::move(col));
            return true;
        }
        const std::size_t cols = v.front().is_array() ? v.front().size() : 0;
        std::vector<double> data;
        for (const Json& row : v) {
            if (!row.is_array() || row.size() != cols || cols == 0) {
                problems_.push_back(msg);
                return false;
            }
            for (const Json& e : row) {
                if (!e.is_number()) {
                    problems_.push_back(msg);
                    return false;
                }
                data.push_back(e.get<double>());
            }
        }
        out = Matrix(v.size(), cols, std::move(data));
        return true;
    }

    [[nodiscard]] std::string where(const std::string& key) const {
        if (key.empty()) {
            return path_.empty() ? "config" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

    void bad(const std::string& key, const std::string& expected) {
        problems_.push_back("'" + where(key) + "' must be " + expected);
    }

    std::vector<std::string>& problems() { return problems_; }

private:
    const Json& obj_;
    std::string path_;
    std::vector<std::string>& problems_;
    std::map<std::string, bool> seen_;
};

inline void read_disturbance(ObjectReader& r, DisturbanceSpec& d) {
    r.choice<DisturbanceKind>("kind", d.kind,
                              {{"none", DisturbanceKind::none},
                               {"uniform_noise", DisturbanceKind::uniform_noise},
                               {"uniform_plus_harmonic", DisturbanceKind::uniform_plus_harmonic}});
    r.number("noise_amplitude", d.noise_amplitude);
    r.number("harmonic_amplitude", d.harmonic_amplitude);
    r.number("harmonic_frequency", d.harmonic_frequency);
    r.number("w_max", d.w_max);
}

inline void read_plant(ObjectReader& r, PlantParams& p) {
    r.matrix_list("A", p.a);
    r.matrix_list("B", p.b);
    r.matrix("x0", p.x0);
    r.matrix("Kx", p.kx);
    r.matrix("Kr", p.kr);
    r.number("l", p.l);
    r.choice<DecayMode>("decay", p.decay, {{"euler", DecayMode::euler}, {"exact", DecayMode::exact}});
    if (const Json* v = r.find("r")) {
        if (v->is_number()) {
            p.r.kind = Reference::Kind::constant;
            p.r.offset = Matrix(1, 1, v->get<double>());
            p.r.amplitude = Matrix(1, 1);
        } else {
            ObjectReader rr(*v, r.where("r"), r.problems());
            rr.choice<Reference::Kind>("kind", p.r.kind,
                                       {{"constant", Reference::Kind::constant},
                                        {"sinusoid", Reference::Kind::sinusoid}});
            rr.matrix("offset", p.r.offset);
            rr.matrix("amplitude", p.r.amplitude);
            rr.number("frequency", p.r.frequency);
            rr.finish();
        }
    }
    if (p.r.amplitude.empty() && !p.r.offset.empty()) {
        p.r.amplitude = Matrix(p.r.offset.rows(), 1);
    }
}

inline void read_sequence(ObjectReader& r, ScenarioConfig& c) {
    const Json* v = r.find("sequence");
    if (v == nullptr) {
        return;
    }
    if (!v->is_array()) {
        r.bad("sequence", "a list of {model, start} entries");
        return;
    }
    std::vector<std::pair<std::size_t, double>> seq;
    for (std::size_t i = 0; i < v->size(); ++i) {
        ObjectReader e((*v)[i], "sequence[" + std::to_string(i) + "]", r.problems());
        std::size_t label = 0;
        double start = 0.0;
        e.count("model", label);
        e.number("start", start);
        e.finish();
        seq.emplace_back(label, start);
    }
    c.sequence = std::move(seq);
}

inline void read_regressor(ObjectReader& r, ScenarioConfig& c) {
    const Json* v = r.find("regressor");
    if (v == nullptr) {
        return;
    }
    if (!v->is_array()) {
        r.bad("regressor", "a list of {type, a, b} entries");
        return;
    }
    std::vector<RegressorTerm> terms;
    for (std::size_t i = 0; i < v->size(); ++i) {
        ObjectReader e((*v)[i], "regressor[" + std::to_string(i) + "]", r.problems());
        RegressorTerm t;
        e.choice<RegressorTerm::Type>("type", t.type,
                                      {{"constant", RegressorTerm::Type::constant},
                                       {"exp", RegressorTerm::Type::exp},
                                       {"sin", RegressorTerm::Type::sin},
                                       {"cos", RegressorTerm::Type::cos}});
        e.number("a", t.a);
        e.number("b", t.b);
        e.finish();
        terms.push_back(t);
    }
    c.regressor = std::move(terms);
}

template <typename F>
void read_section(ObjectReader& r, const std::string& key, F&& body) {
    if (const Json* v = r.find(key)) {
        ObjectReader sub(*v, r.where(key), r.problems());
        body(sub);
        sub.finish();
    }
}

inline void read_config(const Json& j, ResolvedConfig& rc, std::vector<std::string>& problems) {
    ScenarioConfig& c = rc.scenario;
    ObjectReader r(j, "", problems);
    r.find("scenario");  // consumed by the caller
    r.number("t0", c.t0);
    r.number("horizon", c.horizon);
    r.number("dt", c.dt);
    r.seed("seed", c.seed);
    r.count("decimate", rc.decimate);
    r.number("sigma", c.est.sigma);
    r.number("k", c.est.k);
    r.number("gamma0", c.est.gamma0);
    r.number("rho", c.est.rho);
    r.number("delta_pr", c.est.delta_pr);
    r.choice<DetectorKind>("detector", c.est.detector,
                           {{"exact", DetectorKind::exact}, {"robust", DetectorKind::robust}});
    r.number("eta_rel", c.est.eta_rel);
    r.number("eta_abs", c.est.eta_abs);
    r.number("eta_floor", c.est.eta_floor);
    r.count("window", c.est.window);
    r.count("min_fill", c.est.min_fill);
    r.number("spread_coeff", c.est.spread_coeff);
    r.number("w_max", c.est.w_max);
    r.number("excitation_fraction", c.excitation_fraction);
    r.number("settle", c.settle);
    r.number("bound_settle", c.bound_settle);
    read_section(r, "disturbance", [&](ObjectReader& s) { read_disturbance(s, c.disturbance); });
    r.matrix_list("models", c.models);
    read_sequence(r, c);
    read_regressor(r, c);
    r.matrix("theta0", c.theta0);
    if (const Json* v = r.find("plant")) {
        if (v->is_null()) {
            c.plant.reset();
        } else {
            PlantParams p = c.plant.value_or(PlantParams{});
            ObjectReader s(*v, "plant", problems);
            read_plant(s, p);
            s.finish();
            c.plant = std::move(p);
        }
    }
    read_section(r, "laws", [&](ObjectReader& s) {
        s.boolean("proposed", c.laws.proposed);
        s.boolean("gradient", c.laws.gradient);
        s.boolean("concurrent", c.laws.concurrent);
        s.boolean("purging", c.laws.purging);
        s.boolean("efficient_drem", c.laws.efficient_drem);
    });
    read_section(r, "gradient", [&](ObjectReader& s) { s.number("gain", c.gradient.gain); });
    read_section(r, "concurrent", [&](ObjectReader& s) {
        s.number("gamma1", c.concurrent.gamma1);
        s.number("gamma2", c.concurrent.gamma2);
        if (const Json* v = s.find("record_times")) {
            try {
                c.concurrent.record_times = v->get<std::vector<std::vector<double>>>();
            } catch (const Json::exception&) {
                s.bad("record_times", "a list of time lists, one per model");
            }
        }
    });
    read_section(r, "purging", [&](ObjectReader& s) {
        s.number("gamma", c.purging.gamma);
        s.number("c1", c.purging.c1);
        s.number("c2", c.purging.c2);
        s.number("c3", c.purging.c3);
        s.count("stack_len", c.purging.stack_len);
        s.count("spacing_steps", c.purging.spacing_steps);
    });
    read_section(r, "efficient_drem", [&](ObjectReader& s) {
        s.number("l0", c.efficient_drem.l0);
        s.number("lambda_lb", c.efficient_drem.lambda_lb);
        s.number("lambda_ub", c.efficient_drem.lambda_ub);
        s.number("gamma0", c.efficient_drem.gamma0);
        s.boolean("reset_at_true_switches", c.efficient_drem.reset_at_true_switches);
    });
    r.finish();
}

/// Parses the right-hand side of --set: JSON if it parses, a plain string otherwise.
inline Json override_value(const std::string& text) {
    Json v = Json::parse(text, nullptr, false);
    if (v.is_discarded()) {
        return Json(text);
    }
    return v;
}

}  // namespace detail

/// Applies "a.b.c=value" onto `j`, creating intermediate objects.
inline void apply_override(Json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(ConfigError::Kind::parse, {"override '" + assignment + "' is not key=value"});
    }
    const std::string path = assignment.substr(0, eq);
    Json* node = &j;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) {
            throw ConfigError(ConfigError::Kind::parse, {"override key '" + path + "' has an empty component"});
        }
        parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        Json& next = (*node)[parts[i]];
        if (next.is_null()) {
            next = Json::object();
        }
        if (!next.is_object()) {
            throw ConfigError(ConfigError::Kind::schema, {"override '" + path + "' descends into a non-object"});
        }
        node = &next;
    }
    (*node)[parts.back()] = detail::override_value(assignment.substr(eq + 1));
}

/// Layers preset defaults, then the document, then the overrides, and
/// validates the result. Throws ConfigError on any failure.
inline ResolvedConfig resolve_config(Json doc, const std::vector<std::string>& overrides = {}) {
    if (doc.is_null()) {
        doc = Json::object();
    }
    if (!doc.is_object()) {
        throw ConfigError(ConfigError::Kind::schema, {"config must be a JSON object"});
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    ScenarioKind kind = ScenarioKind::simple_noise_free;
    if (doc.contains("scenario")) {
        const Json& s = doc["scenario"];
        std::optional<ScenarioKind> k = s.is_string() ? scenario_from_string(s.get<std::string>()) : std::nullopt;
        if (!k) {
            throw ConfigError(ConfigError::Kind::schema,
                              {"'scenario' must be one of {simple_noise_free, simple_noise, simple_harmonic, "
                               "switched_plant, custom}"});
        }
        kind = *k;
    }
    ResolvedConfig rc;
    rc.scenario = preset(kind);
    std::vector<std::string> problems;
    detail::read_config(doc, rc, problems);
    if (!problems.empty()) {
        throw ConfigError(ConfigError::Kind::schema, problems);
    }
    std::vector<std::string> violations = rc.scenario.validate();
    if (rc.decimate == 0) {
        violations.push_back("decimate must be at least 1");
    }
    if (!violations.empty()) {
        throw ConfigError(ConfigError::Kind::invariant, violations);
    }
    return rc;
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(ConfigError::Kind::parse, {origin + ": " + e.what()});
    }
}

/// Reads `path` (empty: no file, preset defaults only) and resolves it.
inline ResolvedConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    Json doc = Json::object();
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw ConfigError(ConfigError::Kind::file, {"cannot open config file '" + path + "'"});
        }
        std::stringstream buf;
        buf << in.rdbuf();
        doc = parse_json_text(buf.str(), path);
    }
    return resolve_config(std::move(doc), overrides);
}

}  // namespace pcid
