#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "penfsi/grid.hpp"
#include "penfsi/shapes.hpp"

namespace penfsi {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BodySpec {
    int id = 0;
    Shape shape;
    double density = 1.0;  // fluid density is 1
    Vec3 velocity{0.0, 0.0, 0.0};
    Vec3 spin{0.0, 0.0, 0.0};  // 2D: spin[2] is the scalar angular velocity
};

struct DomainSpec {
    Shape shape;
};

enum class FluidDatum { rest, taylor_green, random };
enum class ForcingKind { none, constant, potential };
enum class DtPolicy { fixed, cfl };
enum class ContactPolicy { continue_run, merge, halt };

struct FluidSpec {
    FluidDatum type = FluidDatum::rest;
    double amplitude = 1.0;
    int mode = 1;       // taylor_green: integer wavenumber on the torus
    int max_mode = 4;   // random: stream-function modes |m| <= max_mode
};

/// G(x) = amplitude * cos(2 pi x_axis / wavelength); g = grad G.
struct PotentialSpec {
    double amplitude = 1.0;
    int axis = 1;
    double wavelength = 1.0;
};

struct ForcingSpec {
    ForcingKind kind = ForcingKind::none;
    Vec3 g{0.0, 0.0, 0.0};
    PotentialSpec potential;
};

struct TimeSpec {
    double horizon = 1.0;
    DtPolicy policy = DtPolicy::fixed;
    double dt = 1e-3;
    double cfl = 0.5;
    double dt_max = 1e-2;
};

struct OutputSpec {
    int every = 1;            // ledger and body samples, in steps
    int snapshot_every = 0;   // binary snapshots, in steps (0: final only)
};

struct SolverSpec {
    double viscous_tol = 1e-8;
    double pressure_tol = 1e-8;
    int max_iter = 20000;
    bool mass_fix = true;
};

struct ContactSpec {
    ContactPolicy policy = ContactPolicy::merge;
    double threshold_cells = 3.0;
};

struct Config {
    TorusGrid grid;
    std::optional<DomainSpec> domain;
    std::vector<BodySpec> bodies;
    double epsilon = 1e-3;
    double delta = 0.0;      // layer width and mollifier radius
    double chi_width = 0.0;  // ramp width of the exterior penalty profile
    FluidSpec fluid;
    ForcingSpec forcing;
    TimeSpec time;
    OutputSpec output;
    SolverSpec solver;
    ContactSpec contacts;
    unsigned long long seed = 0;
};

/// Parses and validates a JSON config document. Unknown keys, missing
/// required keys and out-of-range values raise ConfigError with the key path.
Config load_config(const std::string& text);
Config load_config_file(const std::string& path);
/// Full config with every default filled in, as JSON text.
std::string config_to_json(const Config& c, int indent = 2);

}  // namespace penfsi
