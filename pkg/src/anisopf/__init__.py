"""Finite element simulator for anisotropic phase-field solidification."""

from .anisotropy import (
    AnisotropyDensity,
    MobilitySpec,
    anisotropy_from_name,
    make_isotropic,
    make_regularized_l1,
    make_rotated_family,
    mobility_from_name,
    verify_anisotropy_inequalities,
)
from .potentials import PotentialSpec, ShapeSpec, boundary_layer_check
from .mesh import (
    NodalField,
    SimplicialMesh,
    adapt_to_interface,
    build_uniform_mesh,
    transfer_field,
)
from .solver import SolverConfig, StepReport
from .stepper import PhysicalParams, SimulationState, run_simulation
from .config import RunConfig, load_config, parse_config, serialize_config

__all__ = [
    "AnisotropyDensity",
    "MobilitySpec",
    "NodalField",
    "PhysicalParams",
    "PotentialSpec",
    "RunConfig",
    "ShapeSpec",
    "SimplicialMesh",
    "SimulationState",
    "SolverConfig",
    "StepReport",
    "adapt_to_interface",
    "anisotropy_from_name",
    "boundary_layer_check",
    "build_uniform_mesh",
    "load_config",
    "make_isotropic",
    "make_regularized_l1",
    "make_rotated_family",
    "mobility_from_name",
    "parse_config",
    "run_simulation",
    "serialize_config",
    "transfer_field",
    "verify_anisotropy_inequalities",
]
