"""Quasistatic gradient-damage evolutions with fatigue in 2D antiplane shear.

Viscous time-incremental minimisation on P1 triangulations, with
Kuhn-Tucker and energy-balance diagnostics, arc-length (vanishing
viscosity) rescaling, and a brute-force oracle certifying the
bound-constrained damage solver on small convex instances.
"""
from .config import ConfigError, RunConfig, build_problem, load_config, resolve_config
from .diagnostics import (BalanceReport, KktReport, energy_balance_residual,
                          kkt_residuals, stability_psi)
from .energy_forms import (DiscreteState, EnergyBreakdown, dissipation_R,
                           grad_alpha_energy, make_state, total_energy)
from .evolution_driver import (EvolutionTrace, LoadProgram, interpolate_trace,
                               load_checkpoint, resume_evolution, run_evolution,
                               save_checkpoint)
from .incremental_step import (SolverConfig, StepInputs, StepResult,
                               alternate_minimize, solve_damage_subproblem,
                               solve_equilibrium, update_history)
from .material_laws import MaterialLaws, eval_f, eval_g, eval_g_zeta, eval_mu
from .mesh_fe import (FeOperators, Mesh, build_fe_operators,
                      build_structured_mesh, element_gradients)
from .smallscale_oracle import (OracleProblem, generate_instances,
                                oracle_batch_check, oracle_damage_step)
from .variation_utils import ZetaSeries, essential_variation
from .viscosity_rescaling import (JumpProfile, RescaledEvolution, SweepReport,
                                  arc_length_rescale, jump_profile, sweep_compare)

__version__ = "0.1.0"
