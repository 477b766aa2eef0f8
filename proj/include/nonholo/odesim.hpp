#ifndef NONHOLO_ODESIM_HPP
#define NONHOLO_ODESIM_HPP

#include <iosfwd>
#include <vector>

#include "nonholo/mechanics.hpp"

namespace nonholo {

/// Time grid with packed states and per-step residual channels.
struct Trajectory {
  Dynamics which = Dynamics::kNH;
  std::vector<double> t;
  std::vector<std::vector<double>> states;  // packed [q, v] or [q, v, p]
  std::vector<double> res_constraint;
  std::vector<double> res_kernel;
  std::vector<double> res_variety;
  std::vector<double> energy;
  bool truncated = false;  // hit a non-finite state before t_end

  std::size_t steps() const { return t.size(); }
};

struct IntegrateOptions {
  double t_end = 5.0;
  double dt = 1e-3;
  bool adaptive = false;    // embedded 4(5) pair instead of fixed RK4
  double tolerance = 1e-9;  // adaptive error control
  std::vector<AffineFiberFunction> variety_conditions;  // residual channel
};

/// Classical fixed-step RK4 or an embedded 4(5) pair, in frame coordinates.
Trajectory integrate(const MechanicalSystem& sys, Dynamics which, const PhaseState& s0,
                     const IntegrateOptions& options = {});

/// Max annihilator pairing of the frame-reconstructed chart velocity; zero by
/// construction for frame-coordinate trajectories.
double residual_constraint(const MechanicalSystem& sys, const Trajectory& traj);

/// Same detector against user-supplied chart positions and velocities.
double residual_constraint_replay(const MechanicalSystem& sys,
                                  const std::vector<std::vector<double>>& qs,
                                  const std::vector<std::vector<double>>& qdots);

/// Max over steps of |F̂*(v(t)) p(t)|.
double residual_kernel(const MechanicalSystem& sys, const Trajectory& traj);

/// Max over steps and conditions of |mu(q,v)·p + c(q,v)|.
double residual_variety(const MechanicalSystem& sys, const Trajectory& traj,
                        const std::vector<AffineFiberFunction>& conditions);

/// Max over steps of |E(t) - E(0)|.
double energy_drift(const Trajectory& traj);

/// Integrates NH from (q,v) and RCV from (q,v,p0) on a shared grid and
/// returns the sup-norm gap of the (q,v) blocks.
double compare_nh_rcv(const MechanicalSystem& sys, const PhaseState& s0, double t_end,
                      double dt);

/// CSV export: t,<chart>,<v>,<p>,res_constraint,res_kernel,res_variety,energy.
void write_csv(const MechanicalSystem& sys, const Trajectory& traj, std::ostream& os);

}  // namespace nonholo

#endif  // NONHOLO_ODESIM_HPP
