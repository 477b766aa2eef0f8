#ifndef NONHOLO_MODELS_HPP
#define NONHOLO_MODELS_HPP

#include <map>
#include <string>

#include "nonholo/mechanics.hpp"

namespace nonholo {

class ModelParseError : public ModelError {
 public:
  ModelParseError(const std::string& what, int line)
      : ModelError(what + " (line " + std::to_string(line) + ")"), line(line) {}
  int line;
};

/// Disc rolling with no slip on a plane inclined at tau.  Chart
/// (theta, phi, x, y), frame velocities (v_s, v_r), adjoints (p_1, p_2).
/// All parameters must be positive except tau, which lies in [0, pi/2).
MechanicalSystem rolling_disc(double m = 1.0, double R = 1.0, double J_s = 1.0,
                              double J_r = 1.0, double grav = 9.8,
                              double tau = 0.5235987755982988);

/// Euclidean R^3 with D = span{d/dx, d/dy} and zero potential; every
/// curvature object vanishes.  Sanity fixture for the holonomic case.
MechanicalSystem flat_holonomic();

MechanicalSystem load_model(const std::string& path);
MechanicalSystem load_model_text(const std::string& text);

/// Serializes a built system in the model-file format; load_model of the
/// result reproduces the system.
std::string print_model(const MechanicalSystem& sys);

/// "disc" or "flat_holonomic", or a path to a model file.  `overrides`
/// replaces parameter values before the system is built.
MechanicalSystem make_model(const std::string& name_or_path,
                            const std::map<std::string, double>& overrides = {});

}  // namespace nonholo

#endif  // NONHOLO_MODELS_HPP
