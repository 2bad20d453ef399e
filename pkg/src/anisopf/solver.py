"""One-step solvers for the coupled phase/temperature systems.

The obstacle scheme leads to a nonsmooth saddle point problem: a heat row
that is linear in (U, W) and a variational inequality for U over the box
[-1, 1]^J.  Two solution methods are provided.

* ``active_set_step``: a primal active-set (Uzawa-type) iteration.  A few
  projected Gauss-Seidel sweeps on the phase row identify the nodes
  pinned at +-1; the remaining coupled linear system, with pinned rows
  replaced by the identity, is solved by a sparse LU factorization.  The
  iteration stops when the active sets repeat and the iterates stall.
* ``lagged_step``: an outer fixed point that freezes the iterate-dependent
  coefficients (the rho-hat weighted coupling and, for r > 1, the
  anisotropic stiffness), solves the resulting linear-coefficient problem
  with the active-set machinery, and relaxes with a factor omega.  This is
  the robust choice for strongly nonlinear exponents.

The smooth (quartic) scheme is solved by ``newton_smooth_step``, a damped
Newton method with an analytic Jacobian in which the direction argument of
the anisotropic linearization is frozen per iteration.

All sweeps and factorizations run in a fixed order, so identical inputs
produce bit-identical outputs.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import lumped_mass
from .errors import (
    NewtonDivergence,
    NonConvergence,
    NotApplicable,
    SingularSystem,
    ZeroDiagonal,
)

__all__ = [
    "SolverConfig",
    "StepReport",
    "pgs_vi_solve",
    "active_set_step",
    "lagged_step",
    "newton_smooth_step",
    "conservation_audit",
    "residual_audit",
    "choose_method",
]

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _pgs_sweeps_py(indptr, indices, data, diag, rhs, x, max_sweeps, tol,
                   stop_on_sets):
    n = x.shape[0]
    act_prev = np.zeros(n, dtype=np.int8)
    act_cur = np.zeros(n, dtype=np.int8)
    have_prev = False
    sweeps = 0
    while sweeps < max_sweeps:
        maxdiff = 0.0
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s += data[k] * x[j]
            xi = (rhs[i] - s) / diag[i]
            if xi > 1.0:
                xi = 1.0
            elif xi < -1.0:
                xi = -1.0
            d = abs(xi - x[i])
            if d > maxdiff:
                maxdiff = d
            x[i] = xi
            act_cur[i] = 1 if xi == 1.0 else (-1 if xi == -1.0 else 0)
        sweeps += 1
        if stop_on_sets and have_prev and np.array_equal(act_cur, act_prev):
            return sweeps
        if maxdiff < tol:
            return sweeps
        act_prev, act_cur = act_cur, act_prev
        have_prev = True
    return -sweeps


if njit is not None:
    _pgs_sweeps_jit = njit(cache=True)(_pgs_sweeps_py)
else:  # pragma: no cover
    _pgs_sweeps_jit = _pgs_sweeps_py


@dataclass
class SolverConfig:
    """Iteration controls for the step solvers."""

    method: str = "auto"          # active-set | lagged | auto
    tol: float = 1e-8
    max_outer: int = 200
    omega: float = 0.5            # lagged relaxation, in (0, 1]
    pgs_max_sweeps: int = 500
    newton_tol: float = 1e-8
    newton_max_iter: int = 30

    def __post_init__(self):
        if self.method not in ("active-set", "lagged", "auto"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tol <= 0.0 or self.newton_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError("relaxation omega must lie in (0, 1]")
        if self.max_outer < 1 or self.pgs_max_sweeps < 1 or self.newton_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class StepReport:
    """Diagnostics of one time-step solve."""

    method: str
    outer_iterations: int = 0
    inner_iterations: int = 0
    pgs_sweeps: int = 0
    active_plus: int = 0
    active_minus: int = 0
    residual: float = float("nan")
    relaxation: float = float("nan")
    wall_time: float = 0.0
    converged: bool = False
    active_history: list = field(default_factory=list)


def choose_method(cfg, aniso):
    """Resolve ``auto``: active-set up to r = 3, lagged beyond."""
    if cfg.method != "auto":
        return cfg.method
    return "active-set" if aniso.exponent <= 3.0 else "lagged"


def pgs_vi_solve(C, rhs, x0, cfg, stop_on_active_sets=False):
    """Projected Gauss-Seidel for the box-constrained system C x = rhs.

    Sweeps run in ascending index order, each update clamped to [-1, 1].
    By default the iteration runs until the sweep increment drops below
    ``cfg.tol``; with ``stop_on_active_sets`` it additionally stops as soon
    as two successive sweeps produce the same active sets, which is all the
    primal active-set outer iteration needs from the half-step.  Returns
    ``(x, sweeps)``.
    """
    C = C.tocsr()
    diag = C.diagonal()
    if np.any(diag <= 0.0):
        raise ZeroDiagonal("system diagonal must be positive")
    x = np.clip(np.asarray(x0, dtype=float), -1.0, 1.0).copy()
    sweeps = _pgs_sweeps_jit(C.indptr, C.indices, C.data, diag,
                             np.asarray(rhs, dtype=float), x,
                             cfg.pgs_max_sweeps, cfg.tol,
                             bool(stop_on_active_sets))
    if sweeps < 0:
        raise NonConvergence(
            f"projected Gauss-Seidel did not settle in {cfg.pgs_max_sweeps} sweeps")
    return x, sweeps


def _solve_block(sys, C, m_rho, act_plus, act_minus, f):
    """Solve the linear system with pinned rows replaced by the identity."""
    act = act_plus | act_minus
    if act.all() and sys.theta == 0.0 and not sys.dirichlet.any():
        raise SingularSystem(
            "all nodes active under pure Neumann conditions with theta = 0")
    n = sys.n
    inact = sp.diags((~act).astype(float))
    C_hat = (inact @ C + sp.diags(act.astype(float))).tocsr()
    M_hat = (inact @ sp.diags(sys.lam * m_rho)).tocsr()
    g_hat = np.where(act_plus, 1.0, np.where(act_minus, -1.0, sys.g))
    free = sp.diags((~sys.dirichlet).astype(float))
    MW = (free @ (sys.theta * sp.diags(sys.M) + sys.tau * sys.A_diff)
          + sp.diags(sys.dirichlet.astype(float))).tocsr()
    MU = (free @ sp.diags(sys.lam * m_rho)).tocsr()
    K = sp.bmat([[C_hat, -M_hat], [MU, MW]], format="csc")
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    sol = lu.solve(np.concatenate([g_hat, f]))
    U, W = sol[:n].copy(), sol[n:].copy()
    W[sys.dirichlet] = sys.u_D
    return U, W


def _uzawa_solve(sys, cfg, U0, W0, rebuild, report):
    """Active-set iteration; ``rebuild`` refreshes coefficients at iterates."""
    n = sys.n
    U = np.clip(np.asarray(U0, dtype=float), -1.0, 1.0).copy()
    W = None if W0 is None else np.asarray(W0, dtype=float).copy()

    def mats(Uk):
        B = sys.b_matrix_at(Uk)
        C = sys.c_matrix(B)
        m_rho = sys.m_rho_diag(Uk)
        return C, m_rho, sys.f_rhs(m_rho)

    def same(sa, sb):
        return (sa is not None and sb is not None
                and np.array_equal(sa[0], sb[0])
                and np.array_equal(sa[1], sb[1]))

    C, m_rho, f = mats(U)
    kkt_tol = 10.0 * cfg.tol * (1.0 + np.abs(sys.g).max())
    sets = [None, None, None]      # active sets of the last three iterations
    W_prev = None
    act_plus = act_minus = np.zeros(n, dtype=bool)
    for k in range(cfg.max_outer):
        if k == 0 and W is None:
            U_half = U.copy()
            act_plus = U_half == 1.0
            act_minus = U_half == -1.0
        else:
            W_pgs = W
            if (W_prev is not None and same(sets[-1], sets[-3])
                    and not same(sets[-1], sets[-2])):
                # period-2 cycle of the active sets: damp the temperature
                # seen by the half-step to break the oscillation
                W_pgs = 0.5 * (W + W_prev)
            rhs = sys.g + sys.lam * m_rho * W_pgs
            U_half, sweeps = pgs_vi_solve(C, rhs, U, cfg,
                                          stop_on_active_sets=True)
            report.pgs_sweeps += sweeps
            act_plus = U_half == 1.0
            act_minus = U_half == -1.0
        U_new, W_new = _solve_block(sys, C, m_rho, act_plus, act_minus, f)
        report.outer_iterations += 1
        report.active_history.append((int(act_plus.sum()), int(act_minus.sum())))
        if W is None:
            diff = np.inf
        else:
            diff = max(np.abs(U_new - U).max(), np.abs(W_new - W).max())
        W_prev = W
        U, W = U_new, W_new
        if rebuild and (sys.b_depends_on_iterate or sys.rho_plus_nonzero):
            C, m_rho, f = mats(np.clip(U, -1.0, 1.0))
        if diff < cfg.tol:
            # a truncated half-step can certify a stale pinned region, and
            # at a marginally stable state the sets wander at round-off
            # level, so acceptance rests on the sign conditions of the
            # inequality; on failure correct the sets and keep iterating
            res = C @ U - sys.lam * m_rho * W - sys.g
            bad_minus = act_minus & (res < -kkt_tol)
            bad_plus = act_plus & (res > kkt_tol)
            inactive = ~(act_plus | act_minus)
            pin_plus = inactive & (U > 1.0 + cfg.tol)
            pin_minus = inactive & (U < -1.0 - cfg.tol)
            if not (bad_minus.any() or bad_plus.any()
                    or pin_plus.any() or pin_minus.any()):
                sets = [sets[-2], sets[-1], (act_plus, act_minus)]
                report.converged = True
                break
            act_plus = (act_plus & ~bad_plus) | pin_plus
            act_minus = (act_minus & ~bad_minus) | pin_minus
            U, W = _solve_block(sys, C, m_rho, act_plus, act_minus, f)
            report.outer_iterations += 1
            report.active_history.append(
                (int(act_plus.sum()), int(act_minus.sum())))
            if rebuild and (sys.b_depends_on_iterate or sys.rho_plus_nonzero):
                C, m_rho, f = mats(np.clip(U, -1.0, 1.0))
        sets = [sets[-2], sets[-1], (act_plus, act_minus)]
    else:
        raise NonConvergence(
            f"active-set iteration did not converge in {cfg.max_outer} steps")
    U = np.clip(U, -1.0, 1.0)
    U[act_plus] = 1.0
    U[act_minus] = -1.0
    report.active_plus = int(act_plus.sum())
    report.active_minus = int(act_minus.sum())
    report.residual = diff
    return U, W


def active_set_step(sys, cfg, u0=None, w0="prev"):
    """One obstacle step via the primal active-set iteration.

    ``u0``/``w0`` seed the iteration (defaults: the previous state).  Pass
    ``w0=None`` when no temperature guess exists; the first half-step is
    then skipped and the initial active sets are read off ``u0``.
    """
    t0 = time.perf_counter()
    report = StepReport(method="active-set")
    U0 = sys.phi_prev if u0 is None else u0
    W0 = sys.w_prev if isinstance(w0, str) and w0 == "prev" else w0
    U, W = _uzawa_solve(sys, cfg, U0, W0, rebuild=True, report=report)
    report.wall_time = time.perf_counter() - t0
    return U, W, report


def lagged_step(sys, cfg, u0=None, w0="prev"):
    """One obstacle step via the lagged (frozen-coefficient) fixed point.

    Each outer iteration solves the problem with coefficients frozen at the
    current iterate, then relaxes with factor omega.  On non-convergence
    omega is halved, up to four times.
    """
    t0 = time.perf_counter()
    U0 = np.clip(sys.phi_prev if u0 is None else np.asarray(u0, float), -1, 1)
    W0 = sys.w_prev if isinstance(w0, str) and w0 == "prev" else w0
    omega = cfg.omega
    last_exc = None
    for _attempt in range(5):
        report = StepReport(method="lagged", relaxation=omega)
        try:
            U, W = _lagged_once(sys, cfg, U0, W0, omega, report)
            report.wall_time = time.perf_counter() - t0
            return U, W, report
        except NonConvergence as exc:
            last_exc = exc
            omega *= 0.5
    raise NonConvergence(
        f"lagged iteration failed down to omega={omega * 2:g}: {last_exc}")


def _lagged_once(sys, cfg, U0, W0, omega, report):
    U = U0.copy()
    W = None if W0 is None else np.asarray(W0, float).copy()
    inner_cfg = cfg
    for k in range(cfg.max_outer):
        sub = StepReport(method="active-set")
        U_half, W_half = _uzawa_solve(sys, inner_cfg, U, W, rebuild=False,
                                      report=sub)
        report.inner_iterations += sub.outer_iterations
        report.pgs_sweeps += sub.pgs_sweeps
        if W is None:
            U_new, W_new = U_half, W_half
            diff = np.inf
        else:
            U_new = (1.0 - omega) * U + omega * U_half
            W_new = (1.0 - omega) * W + omega * W_half
            diff = max(np.abs(U_new - U).max(), np.abs(W_new - W).max())
        U, W = U_new, W_new
        report.outer_iterations += 1
        if diff < cfg.tol:
            sub = StepReport(method="active-set")
            U, W = _uzawa_solve(sys, inner_cfg, U, W, rebuild=False, report=sub)
            report.inner_iterations += sub.outer_iterations
            report.pgs_sweeps += sub.pgs_sweeps
            report.active_plus = sub.active_plus
            report.active_minus = sub.active_minus
            report.residual = diff
            report.converged = True
            return U, W
    raise NonConvergence(
        f"lagged fixed point stalled after {cfg.max_outer} iterations "
        f"(omega={omega:g})")


def _smooth_residual(sys, U, W, B):
    C = sys.c_matrix(B)
    m_rho = sys.m_rho_diag(U)
    r_phi = C @ U + sys.c_conc * sys.M * U**3 - sys.lam * m_rho * W - sys.g
    r_w = (sys.lam * m_rho * (U - sys.phi_prev)
           + sys.theta * sys.M * (W - sys.w_prev)
           + sys.tau * (sys.A_diff @ W))
    r_w[sys.dirichlet] = W[sys.dirichlet] - sys.u_D
    return r_phi, r_w, m_rho, C


def newton_smooth_step(sys, cfg):
    """One smooth-potential step by damped Newton with analytic Jacobian.

    The implicit cubic and the clamped implicit shape part are linearized
    exactly; the direction argument of the anisotropic stiffness is frozen
    within each linearization and refreshed between iterations.
    """
    t0 = time.perf_counter()
    report = StepReport(method="newton")
    n = sys.n
    sh = sys._shape
    U = sys.phi_prev.copy()
    W = sys.w_prev.copy()
    B = sys.b_matrix_at(U)
    r_phi, r_w, m_rho, C = _smooth_residual(sys, U, W, B)
    rnorm = max(np.abs(r_phi).max(), np.abs(r_w).max())
    free = sp.diags((~sys.dirichlet).astype(float))
    D_dir = sp.diags(sys.dirichlet.astype(float))
    for _it in range(cfg.newton_max_iter):
        if rnorm < cfg.newton_tol:
            report.converged = True
            break
        drho = sh.rho_plus_deriv_clamped(U)
        J11 = (C + sp.diags(sys.c_conc * sys.M * 3.0 * U**2)
               - sp.diags(sys.lam * sys.M * drho * W)).tocsr()
        J12 = sp.diags(-sys.lam * m_rho)
        J21 = (free @ sp.diags(sys.lam * (m_rho + sys.M * drho * (U - sys.phi_prev)))).tocsr()
        J22 = (free @ (sys.theta * sp.diags(sys.M) + sys.tau * sys.A_diff)
               + D_dir).tocsr()
        K = sp.bmat([[J11, J12], [J21, J22]], format="csc")
        delta = spla.splu(K).solve(-np.concatenate([r_phi, r_w]))
        t = 1.0
        for _ls in range(20):
            U_t = U + t * delta[:n]
            W_t = W + t * delta[n:]
            B_t = sys.b_matrix_at(U_t)
            r_phi_t, r_w_t, m_rho_t, C_t = _smooth_residual(sys, U_t, W_t, B_t)
            rn_t = max(np.abs(r_phi_t).max(), np.abs(r_w_t).max())
            if rn_t < (1.0 - 1e-4 * t) * rnorm:
                break
            t *= 0.5
        else:
            raise NewtonDivergence(
                f"line search exhausted at residual {rnorm:.3e}")
        U, W, B = U_t, W_t, B_t
        r_phi, r_w, m_rho, C = r_phi_t, r_w_t, m_rho_t, C_t
        rnorm = rn_t
        report.outer_iterations += 1
    else:
        if rnorm >= cfg.newton_tol:
            raise NonConvergence(
                f"Newton reached {cfg.newton_max_iter} iterations at "
                f"residual {rnorm:.3e}")
        report.converged = True
    report.residual = rnorm
    W[sys.dirichlet] = sys.u_D
    report.wall_time = time.perf_counter() - t0
    return U, W, report


def conservation_audit(mesh, shape, phi_prev, phi_new, theta, bc_case):
    """|(rho(Phi_old), Phi_new - Phi_old)^h| for conserving configurations.

    Testing the heat row with the constant function shows this vanishes
    when theta = 0 under pure Neumann conditions and an explicit-only
    shape split.
    """
    if theta != 0.0 or bc_case != "neumann":
        raise NotApplicable("audit requires theta = 0 and pure Neumann walls")
    M = lumped_mass(mesh)
    w = shape.rho(np.asarray(phi_prev, dtype=float))
    return float(abs(np.sum(M * w * (np.asarray(phi_new) - np.asarray(phi_prev)))))


def residual_audit(sys, U, W, smooth=False):
    """Max-norm residuals of the heat row and the phase row/VI.

    Returns a dict with the heat-row residual, the phase-row residual on
    nodes where the constraint is inactive, and the worst complementarity
    violation at the pinned nodes (positive residual at +1, negative at
    -1; both should be <= 0 up to solver tolerance).
    """
    B = sys.b_matrix_at(U)
    C = sys.c_matrix(B)
    m_rho = sys.m_rho_diag(U)
    res = C @ U - sys.lam * m_rho * W - sys.g
    if smooth:
        res = res + sys.c_conc * sys.M * U**3
    heat = (sys.lam * m_rho * (U - sys.phi_prev)
            + sys.theta * sys.M * (W - sys.w_prev)
            + sys.tau * (sys.A_diff @ W))
    heat[sys.dirichlet] = W[sys.dirichlet] - sys.u_D
    at_plus = U == 1.0
    at_minus = U == -1.0
    interior = ~(at_plus | at_minus)
    return {
        "heat_max": float(np.abs(heat).max()),
        "vi_interior_max": float(np.abs(res[interior]).max()) if interior.any() else 0.0,
        "comp_plus_worst": float(res[at_plus].max()) if at_plus.any() else 0.0,
        "comp_minus_worst": float(-res[at_minus].min()) if at_minus.any() else 0.0,
    }
