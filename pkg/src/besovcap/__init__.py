"""Hyperbolic fillings, Besov capacities and quasisymmetry tests on sampled metric measure spaces."""

from .kernels import BACKEND
from .space import (
    BallQuery,
    PointCloud,
    ball_measure,
    ball_members,
    estimate_ahlfors_Q,
    gen_cantor,
    gen_interval,
    gen_sierpinski_carpet,
    gen_sierpinski_gasket,
    gen_snowflake_interval,
    make_space,
)
from .filling import build_graph, build_nets, graph_distance_to_root, vertex_level
from .uniformize import UniformParams, boundary_ball, codim_exponent_fit, d_eps, uniformize

from .energy import (
    Condenser,
    SolveReport,
    besov_capacity,
    besov_energy,
    boundary_condenser,
    edge_capacity,
    extend,
    extension_energy_ratio,
    lipschitz_family,
    newton_capacity,
    newton_energy,
    trace,
)
from .caplab import (
    AnnulusSpec,
    annulus_experiment,
    annulus_grid,
    case_tag,
    hausdorff_content,
    loewner_experiment,
    loewner_lower_bound,
)
from .qs import (
    GaugeParams,
    SampledMap,
    besov_morphism_norm,
    kink_inverse_map,
    promote_gauge,
    qs_capacity_detector,
    qs_verdict,
    weak_qs_constant,
)

__version__ = "0.1.0"
