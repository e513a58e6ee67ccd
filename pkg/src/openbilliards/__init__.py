"""Rotation sets of open billiards: periodic orbits, Birkhoff averages and rotation-vector hulls."""

__version__ = "0.1.0"

from .errors import (
    BilliardError,
    BudgetExceeded,
    BudgetUnsatisfiable,
    NonConvergence,
    SceneError,
    SpecViolation,
    Violation,
    WordError,
)
from .geometry import Obstacle, Scene, balls_scene, check_no_eclipse, equilateral_scene, load_scene
from .symbolic import PeriodicCode, enumerate_periodic, format_code, parse_code, validate_cyclic
from .orbit_solver import estimate_shadowing, observable_phi, solve_open, solve_periodic
from .rotation import (
    approximate_G,
    birkhoff_average,
    build_edge_observable,
    cycle_rotation_set,
    hausdorff,
    rotation_of_periodic,
)
from .constructions import (
    DivergentSequenceSpec,
    convex_combination_code,
    example51_divergence,
    periodize_prefix,
    repeat_block,
)
