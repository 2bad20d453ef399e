"""Time stepping driver: initial data, per-step solves, energy bookkeeping.

Every accepted step is checked against the discrete stability estimates of
the schemes: the energy

    E_h = theta/2 |W - u_D|_h^2
          + (lam alpha / a) (1/c_psi) [ eps/2 ||gamma(grad Phi)||^2
                                        + 1/eps (Psi(Phi), 1)^h ]

decreases once the supercooling work and the two dissipation terms
(conductive and kinetic) are added, and the free energy
F_h = E_h - lam u_D (P(Phi), 1)^h is monotone outright whenever the shape
split matches the sign of u_D.  Violations beyond round-off indicate a
broken scheme, so the driver records the slack of both inequalities each
step.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import output
from .assembly import assemble_step_system, lumped_mass
from .errors import (
    InterfaceTooWide,
    MeshChanged,
    NonConvergence,
    NotApplicable,
    StabilityViolation,
)
from .mesh import NodalField, adapt_to_interface, build_uniform_mesh, transfer_field
from .solver import (
    active_set_step,
    choose_method,
    lagged_step,
    newton_smooth_step,
)

__all__ = [
    "PhysicalParams",
    "SimulationState",
    "EnergyRow",
    "StabilityReport",
    "initial_phase",
    "initial_temperature",
    "discrete_energy",
    "verify_stability",
    "run_simulation",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Constant physical parameters of one run."""

    theta: float = 0.0
    lam: float = 1.0
    a: float = 1.0
    alpha: float = 1.0
    rho: float = 0.0
    Kplus: float = 1.0
    Kminus: float = 1.0
    eps: float = 1.0 / (16.0 * math.pi)
    u_D: float = 0.0
    H: float = 0.5
    bc_case: str = "dirichlet"
    R0: float = 0.1
    T_end: float = 1e-3
    tau: float = 1e-5

    def __post_init__(self):
        checks = [
            (self.theta >= 0.0, "theta must be >= 0"),
            (self.lam > 0.0, "lambda must be > 0"),
            (self.a > 0.0, "a must be > 0"),
            (self.alpha > 0.0, "alpha must be > 0"),
            (self.rho >= 0.0, "rho must be >= 0"),
            (self.Kplus > 0.0 and self.Kminus > 0.0, "K+- must be > 0"),
            (self.eps > 0.0, "eps must be > 0"),
            (self.H > 0.0, "H must be > 0"),
            (0.0 < self.R0 < self.H, "R0 must lie in (0, H)"),
            (self.T_end > 0.0, "T_end must be > 0"),
            (self.tau > 0.0, "tau must be > 0"),
            (self.bc_case in ("dirichlet", "neumann", "mixed"),
             "unknown boundary case"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


@dataclass
class EnergyRow:
    t: float
    E_h: float
    F_h: float
    diffusive: float
    kinetic: float
    stab2_slack: float
    stab3_slack: float
    stab2_holds: bool
    stab3_holds: bool
    phi_within_split_bound: bool = True


@dataclass
class StabilityReport:
    ineq_stab2_holds: bool
    ineq_stab3_holds: bool
    stab2_slack: float
    stab3_slack: float
    diffusive: float
    kinetic: float


@dataclass
class SimulationState:
    """Fields and bookkeeping at one time level."""

    t: float
    mesh: object
    phi: NodalField
    w: NodalField
    ledger: list = field(default_factory=list)
    reports: list = field(default_factory=list)


def initial_phase(mesh, R0, eps):
    """Circular/spherical seed: solid (-1) inside radius R0, liquid outside.

    The profile ramps through sin((|x| - R0)/eps) across a band of width
    eps*pi, which must fit inside the seed.
    """
    if eps * math.pi / 2.0 >= R0:
        raise InterfaceTooWide(
            f"interface half-width {eps * math.pi / 2:.4g} exceeds R0 = {R0}")
    r = np.linalg.norm(mesh.vertices, axis=1)
    vals = np.sin((r - R0) / eps)
    vals[r <= R0 - eps * math.pi / 2.0] = -1.0
    vals[r >= R0 + eps * math.pi / 2.0] = 1.0
    return NodalField(vals, mesh)


def initial_temperature(mesh, u_D, R0, H, theta=1.0):
    """Radial initial temperature: zero in the seed, u_D at the far field."""
    if theta == 0.0:
        raise NotApplicable("initial temperature is only used when theta > 0")
    r = np.linalg.norm(mesh.vertices, axis=1)
    vals = np.where(
        r <= R0,
        0.0,
        u_D * (1.0 - np.exp(R0 - r)) / (1.0 - math.exp(R0 - H)),
    )
    vals[r >= H] = u_D
    return NodalField(vals, mesh)


def discrete_energy(mesh, phi, w, params, pot, sh, aniso):
    """(E_h, F_h) of a nodal pair; gradient term integrated exactly."""
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    M = lumped_mass(mesh)
    grads = mesh.field_gradients(phi)
    g = aniso.gamma(grads)
    grad_term = 0.5 * params.eps * float(np.sum(mesh.volumes * g * g))
    s = np.clip(phi, -1.0, 1.0) if pot.kind == "obstacle" else phi
    psi_term = float(np.sum(M * pot.psi(s))) / params.eps
    scale = params.lam * params.alpha / (params.a * pot.c_psi)
    E = 0.5 * params.theta * float(np.sum(M * (w - params.u_D) ** 2))
    E += scale * (grad_term + psi_term)
    F = E - params.lam * params.u_D * float(np.sum(M * sh.interp(s)))
    return E, F


def verify_stability(prev, new, params, pot, sh, aniso, mobility,
                     tau=None, sys=None):
    """Evaluate both per-step stability inequalities on a fixed mesh.

    The first compares E_h plus the supercooling work and both dissipation
    terms against the previous E_h; the second is the plain monotonicity of
    F_h including the dissipation.  A flag holds when the left side exceeds
    the right by at most 1e-8 (1 + |rhs|).
    """
    if prev.mesh is not new.mesh:
        raise MeshChanged("stability check requires a common mesh")
    mesh = prev.mesh
    tau = params.tau if tau is None else tau
    smooth = pot.kind == "quartic"
    phi_o, w_o = prev.phi.values, prev.w.values
    phi_n, w_n = new.phi.values, new.w.values

    if sys is not None:
        M, M_mu, A_diff = sys.M, sys.M_mu, sys.A_diff
    else:
        from .assembly import stiffness
        from .potentials import diffusivity_b

        M = lumped_mass(mesh)
        mu_elem = mobility.mu(aniso, mesh.field_gradients(phi_o))
        M_mu = lumped_mass(mesh, mu_elem, per="element")
        b_vertex = diffusivity_b(phi_o, params.Kplus, params.Kminus, clipped=smooth)
        A_diff = stiffness(mesh, b_vertex[mesh.elements].mean(axis=1))

    E_o, F_o = discrete_energy(mesh, phi_o, w_o, params, pot, sh, aniso)
    E_n, F_n = discrete_energy(mesh, phi_n, w_n, params, pot, sh, aniso)
    dphi = phi_n - phi_o
    diffusive = tau * float(w_n @ (A_diff @ w_n))
    kinetic = (params.lam * params.rho * params.eps
               / (params.a * pot.c_psi * tau)) * float(np.sum(M_mu * dphi * dphi))
    if smooth:
        rho_hat = sh.rho_minus(phi_o) + sh.rho_plus_clamped(phi_n)
    else:
        rho_hat = sh.rho_hat(phi_o, phi_n)
    work = -params.u_D * params.lam * float(np.sum(M * rho_hat * dphi))

    lhs2 = E_n + work + diffusive + kinetic
    slack2 = lhs2 - E_o
    lhs3 = F_n + diffusive + kinetic
    slack3 = lhs3 - F_o
    return StabilityReport(
        ineq_stab2_holds=bool(slack2 <= 1e-8 * (1.0 + abs(E_o))),
        ineq_stab3_holds=bool(slack3 <= 1e-8 * (1.0 + abs(F_o))),
        stab2_slack=slack2,
        stab3_slack=slack3,
        diffusive=diffusive,
        kinetic=kinetic,
    )


def _phi_within_split_bound(sh, phi_o, phi_n):
    bound = 2.0 / math.sqrt(3.0)
    if sh.kind != "quartic-shape":
        return True
    if sh.split_sign == "for-negative-uD":
        return bool(phi_o.max() <= bound and phi_n.max() <= bound)
    return bool(phi_o.min() >= -bound and phi_n.min() >= -bound)


def run_simulation(cfg, out_dir=None, strict=False):
    """Run a configured simulation and write its artifact files.

    Produces VTK snapshots every ``vtk_every`` steps, the energy ledger CSV
    and a JSON run report in the output directory.  With ``strict`` a
    failed stability inequality aborts the run.  Solver failures abort
    cleanly: partial outputs are written and the error is re-raised with
    the step index.
    """
    params = cfg.physical_params()
    pot, sh, aniso, mobility = cfg.model_objects()
    scfg = cfg.solver_config()
    out = output.OutputWriter(cfg, out_dir)

    mesh = build_uniform_mesh(params.H, cfg.N_f, cfg.dim, params.bc_case)
    if cfg.initial == "liquid":
        phi = NodalField(np.ones(mesh.n_vertices), mesh)
    else:
        phi = initial_phase(mesh, params.R0, params.eps)
    if cfg.adaptive:
        mesh2, tmap = adapt_to_interface(mesh, phi, cfg.N_f, cfg.N_c)
        phi = transfer_field(phi, tmap)
        mesh = mesh2
    if params.theta > 0.0:
        w = initial_temperature(mesh, params.u_D, params.R0, params.H,
                                params.theta)
    else:
        w = NodalField(np.full(mesh.n_vertices, params.u_D), mesh)
    state = SimulationState(0.0, mesh, phi, w)

    n_steps = int(math.floor(params.T_end / params.tau + 1e-9))
    out.vtk_snapshot(state, 0)
    method = None
    if pot.kind == "obstacle":
        method = choose_method(scfg, aniso)

    n = 0
    try:
        for n in range(1, n_steps + 1):
            if cfg.adaptive and n > 1:
                new_mesh, tmap = adapt_to_interface(state.mesh, state.phi,
                                                    cfg.N_f, cfg.N_c)
                state = SimulationState(
                    state.t, new_mesh,
                    transfer_field(state.phi, tmap),
                    transfer_field(state.w, tmap),
                    state.ledger, state.reports)
            sys = assemble_step_system(
                state.mesh, params, pot, sh, aniso, mobility,
                state.phi.values, state.w.values)
            # on the first step of theta = 0 runs the stored W is only a
            # placeholder, so the half-step rule for a missing guess applies
            w_guess = None if (n == 1 and params.theta == 0.0) else "prev"
            if pot.kind == "quartic":
                U, W, rep = newton_smooth_step(sys, scfg)
            elif method == "lagged":
                U, W, rep = lagged_step(sys, scfg, w0=w_guess)
            else:
                try:
                    U, W, rep = active_set_step(sys, scfg, w0=w_guess)
                except NonConvergence:
                    if scfg.method != "auto":
                        raise
                    U, W, rep = lagged_step(sys, scfg, w0=w_guess)
            new_state = SimulationState(
                state.t + params.tau, state.mesh,
                NodalField(U, state.mesh), NodalField(W, state.mesh),
                state.ledger, state.reports)
            stab = verify_stability(state, new_state, params, pot, sh,
                                    aniso, mobility, sys=sys)
            E_n, F_n = discrete_energy(state.mesh, U, W, params, pot, sh, aniso)
            row = EnergyRow(
                t=new_state.t, E_h=E_n, F_h=F_n,
                diffusive=stab.diffusive, kinetic=stab.kinetic,
                stab2_slack=stab.stab2_slack, stab3_slack=stab.stab3_slack,
                stab2_holds=stab.ineq_stab2_holds,
                stab3_holds=stab.ineq_stab3_holds,
                phi_within_split_bound=_phi_within_split_bound(
                    sh, state.phi.values, U),
            )
            new_state.ledger.append(row)
            new_state.reports.append(rep)
            state = new_state
            if strict and not (stab.ineq_stab2_holds and stab.ineq_stab3_holds):
                raise StabilityViolation(
                    f"step {n}: stab2_slack={stab.stab2_slack:.3e} "
                    f"stab3_slack={stab.stab3_slack:.3e}")
            out.vtk_snapshot(state, n)
    except Exception as exc:
        if isinstance(exc, StabilityViolation):
            out.finalize(state, error=str(exc))
            raise
        out.finalize(state, error=f"step {max(n, 1)}: {exc}")
        raise type(exc)(f"step {max(n, 1)}: {exc}") from exc

    out.finalize(state)
    return state
