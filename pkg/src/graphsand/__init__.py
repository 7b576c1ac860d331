"""Sandpile growth and collapse dynamics on weighted graphs.

Simulates p-Laplacian gradient flows and their slope-constrained limits
(two growth models and the collapse of unstable data), and verifies the
states against exact transport-duality certificates.
"""

from .graph import (WeightedGraph, VertexField, build_graph, load_graph,
                    parse_edge_lines, field_values, nu_mass, inner_product_nu,
                    nu_norm, graph_distance, constraint_distance,
                    nonlocal_boundary, build_path, build_star, build_truncated_z)
from .calculus import (EdgeField, nonlocal_gradient, divergence, laplacian,
                       p_laplacian, p_laplacian_G, p_laplacian_w, energy_Jp,
                       integration_by_parts_residual)
from .proximal import (ConstraintSet, DykstraProjector, ProjectionError,
                       ResolventError, is_stable, max_relative_slope, project,
                       project_oracle, resolvent_p)
from .evolution import (SourceSchedule, Trajectory, MassBalanceReport,
                        TruncationError, solve_p_flow, solve_growth,
                        solve_collapse, mass_balance, converge_p_experiment,
                        collapse_via_p_experiment)
from .transport import (TransportInstance, distance_table, is_lipschitz_wrt,
                        kantorovich_pairing, ot_cost_oracle, verify_potential,
                        verify_dual_criteria)
from .scenario import (ScenarioConfig, ScenarioError, RunResult, parse_scenario,
                       load_scenario, run_scenario, write_trajectory,
                       read_trajectory)

__version__ = "0.1.0"
