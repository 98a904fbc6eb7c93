#include "penfsi/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace penfsi {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, errors carry the path.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }
    ~Reader() = default;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError((path_.empty() ? std::string("<root>") : path_) + ": " + msg);
    }
    std::string key_path(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    bool has(const std::string& k) const { return j_.contains(k); }

    const json& raw(const std::string& k) {
        seen_.insert(k);
        return j_.at(k);
    }

    double number(const std::string& k, std::optional<double> def = std::nullopt) {
        if (!has(k)) {
            if (def) return *def;
            fail("missing required key '" + k + "'");
        }
        const json& v = raw(k);
        if (!v.is_number()) throw ConfigError(key_path(k) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(key_path(k) + ": must be finite");
        return x;
    }

    long long integer(const std::string& k, std::optional<long long> def = std::nullopt) {
        if (!has(k)) {
            if (def) return *def;
            fail("missing required key '" + k + "'");
        }
        const json& v = raw(k);
        if (!v.is_number_integer()) throw ConfigError(key_path(k) + ": expected an integer");
        return v.get<long long>();
    }

    std::string string(const std::string& k, std::optional<std::string> def = std::nullopt) {
        if (!has(k)) {
            if (def) return *def;
            fail("missing required key '" + k + "'");
        }
        const json& v = raw(k);
        if (!v.is_string()) throw ConfigError(key_path(k) + ": expected a string");
        return v.get<std::string>();
    }

    bool boolean(const std::string& k, bool def) {
        if (!has(k)) return def;
        const json& v = raw(k);
        if (!v.is_boolean()) throw ConfigError(key_path(k) + ": expected true/false");
        return v.get<bool>();
    }

    Vec3 vec(const std::string& k, int dim, std::optional<Vec3> def = std::nullopt) {
        if (!has(k)) {
            if (def) return *def;
            fail("missing required key '" + k + "'");
        }
        const json& v = raw(k);
        if (!v.is_array() || static_cast<int>(v.size()) != dim)
            throw ConfigError(key_path(k) + ": expected an array of " + std::to_string(dim) + " numbers");
        Vec3 out{0.0, 0.0, 0.0};
        for (int i = 0; i < dim; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(key_path(k) + ": expected numbers");
            out[i] = v[static_cast<std::size_t>(i)].get<double>();
        }
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()) + ": unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Shape read_shape(const json& j, const std::string& path, int dim) {
    Reader r(j, path);
    Shape s;
    s.dim = dim;
    const std::string type = r.string("type");
    if (type == "disk" || type == "ball") {
        s.kind = ShapeKind::disk;
        s.radius = r.number("radius");
    } else if (type == "ellipse" || type == "ellipsoid") {
        s.kind = ShapeKind::ellipse;
        s.semi_axes = r.vec("semi_axes", dim);
    } else if (type == "box" || type == "rectangle") {
        s.kind = ShapeKind::box;
        s.half_extents = r.vec("half_extents", dim);
    } else if (type == "polygon") {
        s.kind = ShapeKind::polygon;
        const json& v = r.raw("vertices");
        if (!v.is_array()) throw ConfigError(path + ".vertices: expected an array of [x, y] pairs");
        for (const auto& p : v) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw ConfigError(path + ".vertices: expected [x, y] pairs");
            s.vertices.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } else {
        throw ConfigError(path + ".type: unknown shape '" + type + "'");
    }
    r.finish();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

void place(Shape& s, Reader& r, int dim) {
    s.center = r.vec("center", dim, Vec3{0.0, 0.0, 0.0});
    if (dim == 2) {
        s.orientation = rotation_2d(r.number("angle", 0.0));
    } else {
        s.orientation = rotation_axis_angle(r.vec("axis_angle", 3, Vec3{0.0, 0.0, 0.0}));
    }
}

json shape_json(const Shape& s) {
    json j;
    j["type"] = s.kind_name();
    auto arr = [&](const Vec3& v) {
        json a = json::array();
        for (int i = 0; i < s.dim; ++i) a.push_back(v[i]);
        return a;
    };
    switch (s.kind) {
        case ShapeKind::disk: j["radius"] = s.radius; break;
        case ShapeKind::ellipse: j["semi_axes"] = arr(s.semi_axes); break;
        case ShapeKind::box: j["half_extents"] = arr(s.half_extents); break;
        case ShapeKind::polygon: {
            json v = json::array();
            for (const auto& p : s.vertices) v.push_back({p[0], p[1]});
            j["vertices"] = v;
            break;
        }
    }
    return j;
}

// Geometric checks on grid nodes: bodies pairwise disjoint, inside the
// domain, domain strictly inside the box with room for the penalty ramp.
void validate_geometry(const Config& c) {
    const TorusGrid& g = c.grid;
    const double h = g.spacing();
    for (const auto& b : c.bodies)
        if (!(c.delta < b.shape.feature_size()))
            throw ConfigError("penalty.delta: must be smaller than the feature size of body " + std::to_string(b.id));

    if (c.domain) {
        const Shape& dom = c.domain->shape;
        const double reach = dom.bounding_radius() + c.chi_width;
        for (int a = 0; a < g.dim; ++a)
            if (dom.center[a] - reach <= -g.half_period || dom.center[a] + reach >= g.half_period) {
                // The bounding ball is conservative; confirm on the nodes of the box faces.
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const auto ij = g.unflatten(i);
                    bool face = false;
                    for (int k = 0; k < g.dim; ++k) face = face || ij[k] == 0;
                    if (!face) continue;
                    if (dom.sdf(g.node(i), g, false) <= c.chi_width)
                        throw ConfigError("domain: closure must lie strictly inside the periodic box, "
                                          "with room for the penalty ramp (chi_width)");
                }
                break;
            }
    }

    std::vector<int> owner(g.size(), -1);
    for (std::size_t bi = 0; bi < c.bodies.size(); ++bi) {
        const auto& b = c.bodies[bi];
        long inside = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto x = g.node(i);
            if (b.shape.sdf(x, g, true) >= 0.0) continue;
            ++inside;
            if (owner[i] >= 0)
                throw ConfigError("bodies: bodies " + std::to_string(c.bodies[static_cast<std::size_t>(owner[i])].id) +
                                  " and " + std::to_string(b.id) + " overlap");
            owner[i] = static_cast<int>(bi);
            if (c.domain && c.domain->shape.sdf(x, g, false) >= -0.5 * h)
                throw ConfigError("bodies: body " + std::to_string(b.id) + " is not inside the domain");
        }
        if (inside == 0) throw ConfigError("bodies: body " + std::to_string(b.id) + " covers no grid node");
    }
}

}  // namespace

Config load_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("parse error: ") + e.what());
    }
    Reader r(root, "");
    Config c;

    {
        Reader gr(r.raw("grid"), "grid");
        const auto dim = gr.integer("dim", 2);
        const double L = gr.number("half_period");
        const auto n = gr.integer("cells");
        gr.finish();
        try {
            c.grid = make_grid(static_cast<int>(dim), L, static_cast<int>(n));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
    }
    const int d = c.grid.dim;
    const double h = c.grid.spacing();

    {
        std::optional<double> eps, delta, delta_cells, chi_w, chi_cells;
        if (r.has("penalty")) {
            Reader pr(r.raw("penalty"), "penalty");
            if (pr.has("epsilon")) eps = pr.number("epsilon");
            if (pr.has("delta")) delta = pr.number("delta");
            if (pr.has("delta_cells")) delta_cells = pr.number("delta_cells");
            if (pr.has("chi_width")) chi_w = pr.number("chi_width");
            if (pr.has("chi_width_cells")) chi_cells = pr.number("chi_width_cells");
            pr.finish();
        }
        if (delta && delta_cells) throw ConfigError("penalty: give either delta or delta_cells, not both");
        if (chi_w && chi_cells) throw ConfigError("penalty: give either chi_width or chi_width_cells, not both");
        c.epsilon = eps.value_or(1e-3);
        if (!(c.epsilon > 0.0)) throw ConfigError("penalty.epsilon: must be > 0");
        c.delta = delta ? *delta : delta_cells.value_or(4.0) * h;
        if (!(c.delta > 0.0)) throw ConfigError("penalty.delta: must be > 0");
        c.chi_width = chi_w ? *chi_w : (chi_cells ? *chi_cells * h : c.delta);
        if (!(c.chi_width >= h)) throw ConfigError("penalty.chi_width: must be at least one grid spacing");
    }

    if (r.has("domain") && !r.raw("domain").is_null()) {
        Reader dr(r.raw("domain"), "domain");
        DomainSpec dom;
        dom.shape = read_shape(dr.raw("shape"), "domain.shape", d);
        place(dom.shape, dr, d);
        dr.finish();
        c.domain = dom;
    }

    if (r.has("bodies")) {
        const json& arr = r.raw("bodies");
        if (!arr.is_array()) throw ConfigError("bodies: expected an array");
        std::set<int> ids;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string path = "bodies[" + std::to_string(i) + "]";
            Reader br(arr[i], path);
            BodySpec b;
            b.id = static_cast<int>(br.integer("id", static_cast<long long>(i + 1)));
            if (b.id <= 0) throw ConfigError(path + ".id: must be positive");
            if (!ids.insert(b.id).second) throw ConfigError(path + ".id: duplicate id " + std::to_string(b.id));
            b.shape = read_shape(br.raw("shape"), path + ".shape", d);
            place(b.shape, br, d);
            b.density = br.number("density");
            if (!(b.density > 0.0))
                throw ConfigError(path + ".density: solid density must be positive");
            b.velocity = br.vec("velocity", d, Vec3{0.0, 0.0, 0.0});
            if (d == 2)
                b.spin = {0.0, 0.0, br.number("spin", 0.0)};
            else
                b.spin = br.vec("spin", 3, Vec3{0.0, 0.0, 0.0});
            br.finish();
            c.bodies.push_back(b);
        }
    }

    if (r.has("fluid")) {
        Reader fr(r.raw("fluid"), "fluid");
        const std::string type = fr.string("type", "rest");
        if (type == "rest")
            c.fluid.type = FluidDatum::rest;
        else if (type == "taylor_green")
            c.fluid.type = FluidDatum::taylor_green;
        else if (type == "random")
            c.fluid.type = FluidDatum::random;
        else
            throw ConfigError("fluid.type: unknown fluid datum '" + type + "'");
        c.fluid.amplitude = fr.number("amplitude", 1.0);
        c.fluid.mode = static_cast<int>(fr.integer("mode", 1));
        c.fluid.max_mode = static_cast<int>(fr.integer("max_mode", 4));
        fr.finish();
        if (c.fluid.mode < 1 || c.fluid.mode >= c.grid.cells / 2) throw ConfigError("fluid.mode: out of range");
        if (c.fluid.max_mode < 1 || c.fluid.max_mode >= c.grid.cells / 3)
            throw ConfigError("fluid.max_mode: out of range");
    }

    if (r.has("forcing")) {
        Reader fr(r.raw("forcing"), "forcing");
        const std::string type = fr.string("type", "none");
        if (type == "none") {
            c.forcing.kind = ForcingKind::none;
        } else if (type == "constant") {
            c.forcing.kind = ForcingKind::constant;
            c.forcing.g = fr.vec("g", d);
        } else if (type == "potential") {
            c.forcing.kind = ForcingKind::potential;
            Reader pr(fr.raw("potential"), "forcing.potential");
            const std::string pt = pr.string("type", "cosine");
            if (pt != "cosine") throw ConfigError("forcing.potential.type: only 'cosine' is supported");
            c.forcing.potential.amplitude = pr.number("amplitude", 1.0);
            c.forcing.potential.axis = static_cast<int>(pr.integer("axis", d - 1));
            c.forcing.potential.wavelength = pr.number("wavelength", c.grid.half_period);
            pr.finish();
            if (c.forcing.potential.axis < 0 || c.forcing.potential.axis >= d)
                throw ConfigError("forcing.potential.axis: out of range");
            const double ratio = c.grid.period() / c.forcing.potential.wavelength;
            if (!(ratio >= 1.0) || std::abs(ratio - std::round(ratio)) > 1e-9)
                throw ConfigError("forcing.potential.wavelength: must divide the period 2L");
        } else {
            throw ConfigError("forcing.type: unknown forcing '" + type + "'");
        }
        fr.finish();
    }

    {
        Reader tr(r.raw("time"), "time");
        c.time.horizon = tr.number("horizon");
        if (!(c.time.horizon > 0.0)) throw ConfigError("time.horizon: must be > 0");
        const std::string pol = tr.string("policy", "fixed");
        if (pol == "fixed")
            c.time.policy = DtPolicy::fixed;
        else if (pol == "cfl")
            c.time.policy = DtPolicy::cfl;
        else
            throw ConfigError("time.policy: expected 'fixed' or 'cfl'");
        c.time.dt = tr.number("dt", 1e-3);
        c.time.cfl = tr.number("cfl", 0.5);
        c.time.dt_max = tr.number("dt_max", 1e-2);
        tr.finish();
        if (!(c.time.dt > 0.0)) throw ConfigError("time.dt: must be > 0");
        if (!(c.time.cfl > 0.0 && c.time.cfl <= 1.0)) throw ConfigError("time.cfl: must be in (0, 1]");
        if (!(c.time.dt_max > 0.0)) throw ConfigError("time.dt_max: must be > 0");
    }

    if (r.has("output")) {
        Reader orr(r.raw("output"), "output");
        c.output.every = static_cast<int>(orr.integer("every", 1));
        c.output.snapshot_every = static_cast<int>(orr.integer("snapshot_every", 0));
        orr.finish();
        if (c.output.every < 1) throw ConfigError("output.every: must be >= 1");
        if (c.output.snapshot_every < 0) throw ConfigError("output.snapshot_every: must be >= 0");
    }

    if (r.has("solver")) {
        Reader sr(r.raw("solver"), "solver");
        c.solver.viscous_tol = sr.number("viscous_tol", 1e-8);
        c.solver.pressure_tol = sr.number("pressure_tol", 1e-8);
        c.solver.max_iter = static_cast<int>(sr.integer("max_iter", 20000));
        c.solver.mass_fix = sr.boolean("mass_fix", true);
        sr.finish();
        if (!(c.solver.viscous_tol > 0.0 && c.solver.viscous_tol < 1.0)) throw ConfigError("solver.viscous_tol: must be in (0,1)");
        if (!(c.solver.pressure_tol > 0.0 && c.solver.pressure_tol < 1.0)) throw ConfigError("solver.pressure_tol: must be in (0,1)");
        if (c.solver.max_iter < 1) throw ConfigError("solver.max_iter: must be >= 1");
    }

    if (r.has("contacts")) {
        Reader cr(r.raw("contacts"), "contacts");
        const std::string pol = cr.string("policy", "merge");
        if (pol == "continue")
            c.contacts.policy = ContactPolicy::continue_run;
        else if (pol == "merge")
            c.contacts.policy = ContactPolicy::merge;
        else if (pol == "halt")
            c.contacts.policy = ContactPolicy::halt;
        else
            throw ConfigError("contacts.policy: expected continue | merge | halt");
        c.contacts.threshold_cells = cr.number("threshold_cells", 3.0);
        cr.finish();
        if (!(c.contacts.threshold_cells >= 2.0)) throw ConfigError("contacts.threshold_cells: must be >= 2");
    }

    if (r.has("seed")) {
        const auto s = r.integer("seed");
        if (s < 0) throw ConfigError("seed: must be >= 0");
        c.seed = static_cast<unsigned long long>(s);
    }
    r.finish();

    if (c.domain || !c.bodies.empty()) validate_geometry(c);
    return c;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str());
}

std::string config_to_json(const Config& c, int indent) {
    const int d = c.grid.dim;
    auto arr = [&](const Vec3& v) {
        json a = json::array();
        for (int i = 0; i < d; ++i) a.push_back(v[i]);
        return a;
    };
    auto angle_of = [](const Mat3& m) { return std::atan2(m[1][0], m[0][0]); };
    auto axis_angle_of = [](const Mat3& m) {
        const double tr = m[0][0] + m[1][1] + m[2][2];
        const double th = std::acos(std::clamp(0.5 * (tr - 1.0), -1.0, 1.0));
        if (th < 1e-12) return Vec3{0.0, 0.0, 0.0};
        const double s = 2.0 * std::sin(th);
        return Vec3{th * (m[2][1] - m[1][2]) / s, th * (m[0][2] - m[2][0]) / s, th * (m[1][0] - m[0][1]) / s};
    };
    json j;
    j["grid"] = {{"dim", d}, {"half_period", c.grid.half_period}, {"cells", c.grid.cells}};
    j["penalty"] = {{"epsilon", c.epsilon}, {"delta", c.delta}, {"chi_width", c.chi_width}};
    if (c.domain) {
        json dj;
        dj["shape"] = shape_json(c.domain->shape);
        dj["center"] = arr(c.domain->shape.center);
        if (d == 2)
            dj["angle"] = angle_of(c.domain->shape.orientation);
        else
            dj["axis_angle"] = arr(axis_angle_of(c.domain->shape.orientation));
        j["domain"] = dj;
    } else {
        j["domain"] = nullptr;
    }
    json bodies = json::array();
    for (const auto& b : c.bodies) {
        json bj;
        bj["id"] = b.id;
        bj["shape"] = shape_json(b.shape);
        bj["center"] = arr(b.shape.center);
        if (d == 2) {
            bj["angle"] = angle_of(b.shape.orientation);
            bj["spin"] = b.spin[2];
        } else {
            bj["axis_angle"] = arr(axis_angle_of(b.shape.orientation));
            bj["spin"] = arr(b.spin);
        }
        bj["density"] = b.density;
        bj["velocity"] = arr(b.velocity);
        bodies.push_back(bj);
    }
    j["bodies"] = bodies;
    const char* fluid_names[] = {"rest", "taylor_green", "random"};
    j["fluid"] = {{"type", fluid_names[static_cast<int>(c.fluid.type)]},
                  {"amplitude", c.fluid.amplitude},
                  {"mode", c.fluid.mode},
                  {"max_mode", c.fluid.max_mode}};
    switch (c.forcing.kind) {
        case ForcingKind::none: j["forcing"] = {{"type", "none"}}; break;
        case ForcingKind::constant: j["forcing"] = {{"type", "constant"}, {"g", arr(c.forcing.g)}}; break;
        case ForcingKind::potential:
            j["forcing"] = {{"type", "potential"},
                            {"potential",
                             {{"type", "cosine"},
                              {"amplitude", c.forcing.potential.amplitude},
                              {"axis", c.forcing.potential.axis},
                              {"wavelength", c.forcing.potential.wavelength}}}};
            break;
    }
    j["time"] = {{"horizon", c.time.horizon},
                 {"policy", c.time.policy == DtPolicy::fixed ? "fixed" : "cfl"},
                 {"dt", c.time.dt},
                 {"cfl", c.time.cfl},
                 {"dt_max", c.time.dt_max}};
    j["output"] = {{"every", c.output.every}, {"snapshot_every", c.output.snapshot_every}};
    j["solver"] = {{"viscous_tol", c.solver.viscous_tol},
                   {"pressure_tol", c.solver.pressure_tol},
                   {"max_iter", c.solver.max_iter},
                   {"mass_fix", c.solver.mass_fix}};
    const char* pol[] = {"continue", "merge", "halt"};
    j["contacts"] = {{"policy", pol[static_cast<int>(c.contacts.policy)]}, {"threshold_cells", c.contacts.threshold_cells}};
    j["seed"] = c.seed;
    return j.dump(indent);
}

}  // namespace penfsi
