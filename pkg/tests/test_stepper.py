import math

import numpy as np
import pytest

from anisopf.anisotropy import MobilitySpec, make_regularized_l1
from anisopf.config import RunConfig
from anisopf.errors import InterfaceTooWide, MeshChanged, NotApplicable
from anisopf.mesh import NodalField, build_uniform_mesh
from anisopf.potentials import PotentialSpec, ShapeSpec
from anisopf.stepper import (
    PhysicalParams,
    SimulationState,
    discrete_energy,
    initial_phase,
    initial_temperature,
    run_simulation,
    verify_stability,
)


@pytest.fixture
def mesh():
    return build_uniform_mesh(0.5, 16, 2, "dirichlet")


def test_initial_phase_profile(mesh):
    eps = 1.0 / (16.0 * math.pi)
    R0 = 0.25
    f = initial_phase(mesh, R0, eps)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(f.values) <= 1.0)
    assert np.all(f.values[r <= R0 - eps * math.pi / 2] == -1.0)
    assert np.all(f.values[r >= R0 + eps * math.pi / 2] == 1.0)
    # vertices on the zero circle (if any) vanish; check the formula instead
    assert float(np.interp(R0, [0.0, 2 * R0], [0.0, 0.0])) == 0.0
    probe = np.sin((r - R0) / eps)
    band = np.abs(r - R0) < eps * math.pi / 2
    assert np.allclose(f.values[band], probe[band])


def test_initial_phase_rejects_wide_interface(mesh):
    with pytest.raises(InterfaceTooWide):
        initial_phase(mesh, R0=0.01, eps=0.1)


def test_initial_temperature_profile(mesh):
    u_D, R0, H = -2.0, 0.25, 0.5
    f = initial_temperature(mesh, u_D, R0, H, theta=1.0)
    r = np.linalg.norm(mesh.vertices, axis=1)
    inner = r <= R0
    assert np.all(f.values[inner] == 0.0)
    edge = np.isclose(r, H)
    # corner vertices have |z| > H and take the far-field value
    assert np.all(f.values[r >= H] == u_D)
    mid = (r > R0) & (r < H)
    expect = u_D * (1.0 - np.exp(R0 - r[mid])) / (1.0 - math.exp(R0 - H))
    assert np.allclose(f.values[mid], expect)
    zero = initial_temperature(mesh, 0.0, R0, H, theta=1.0)
    assert np.all(zero.values == 0.0)


def test_initial_temperature_requires_theta(mesh):
    with pytest.raises(NotApplicable):
        initial_temperature(mesh, -1.0, 0.25, 0.5, theta=0.0)


def _model(u_D=-1.0):
    params = PhysicalParams(theta=1.0, lam=2.0, a=1.0, alpha=0.5, rho=0.0,
                            eps=0.02, u_D=u_D, H=0.5, R0=0.2, tau=1e-4)
    pot = PotentialSpec("obstacle")
    sh = ShapeSpec("lin-minus", "for-negative-uD")
    aniso = make_regularized_l1(0.3, 2)
    return params, pot, sh, aniso, MobilitySpec("gamma")


def test_energy_pure_liquid(mesh):
    params, pot, sh, aniso, _ = _model()
    phi = np.ones(mesh.n_vertices)
    w = np.full(mesh.n_vertices, params.u_D)
    E, F = discrete_energy(mesh, phi, w, params, pot, sh, aniso)
    assert E == pytest.approx(0.0, abs=1e-14)
    assert F == pytest.approx(-params.lam * params.u_D * 1.0, rel=1e-12)


def test_energy_flat_midstate(mesh):
    params, pot, sh, aniso, _ = _model()
    phi = np.zeros(mesh.n_vertices)
    w = np.full(mesh.n_vertices, params.u_D)
    E, _ = discrete_energy(mesh, phi, w, params, pot, sh, aniso)
    expect = (params.lam * params.alpha / params.a) / pot.c_psi \
        * (1.0 / params.eps) * 0.5
    assert E == pytest.approx(expect, rel=1e-12)


def test_energy_scales_with_latent_heat(mesh):
    # every term of F_h except the theta-term carries one factor of lambda
    import dataclasses
    params, pot, sh, aniso, _ = _model()
    params = dataclasses.replace(params, theta=0.0)
    rng = np.random.default_rng(0)
    phi = np.clip(rng.uniform(-1, 1, mesh.n_vertices), -1, 1)
    w = rng.normal(size=mesh.n_vertices)
    params2 = dataclasses.replace(params, lam=2.0 * params.lam)
    E1, F1 = discrete_energy(mesh, phi, w, params, pot, sh, aniso)
    E2, F2 = discrete_energy(mesh, phi, w, params2, pot, sh, aniso)
    assert E2 == pytest.approx(2.0 * E1, rel=1e-12)
    assert F2 == pytest.approx(2.0 * F1, rel=1e-12)


def test_stability_stationary_state(mesh):
    params, pot, sh, aniso, mob = _model()
    phi = initial_phase(mesh, params.R0, params.eps)
    w = NodalField(np.full(mesh.n_vertices, params.u_D), mesh)
    s = SimulationState(0.0, mesh, phi, w)
    rep = verify_stability(s, s, params, pot, sh, aniso, mob)
    assert rep.ineq_stab2_holds and rep.ineq_stab3_holds
    assert rep.diffusive >= 0.0 and rep.kinetic == 0.0
    assert rep.stab2_slack <= 1e-12 and rep.stab3_slack <= 1e-12


def test_stability_rejects_mesh_change(mesh):
    params, pot, sh, aniso, mob = _model()
    other = build_uniform_mesh(0.5, 16, 2, "dirichlet")
    a = SimulationState(
        0.0, mesh, NodalField(np.ones(mesh.n_vertices), mesh),
        NodalField(np.zeros(mesh.n_vertices), mesh))
    b = SimulationState(
        0.0, other, NodalField(np.ones(other.n_vertices), other),
        NodalField(np.zeros(other.n_vertices), other))
    with pytest.raises(MeshChanged):
        verify_stability(a, b, params, pot, sh, aniso, mob)


def base_config(tmp_path, **kw):
    defaults = dict(theta=0.0, rho=1e-3, alpha=1.0, u_D=-1.0, H=0.5,
                    eps=1.0 / (16 * np.pi), R0=0.25, bc="dirichlet",
                    potential="obstacle", shape="linear", anisotropy="ani1:0.3",
                    initial="seed", T_end=5e-5, tau=1e-5, N_f=16, N_c=16,
                    vtk_every=0, out_dir=str(tmp_path))
    defaults.update(kw)
    return RunConfig(**defaults)


def test_run_zero_steps_outputs_initial_state(tmp_path):
    cfg = base_config(tmp_path, T_end=1e-6, tau=1e-5, vtk_every=1)
    state = run_simulation(cfg)
    assert state.t == 0.0
    assert state.ledger == []
    assert (tmp_path / "fields_000000.vtk").exists()
    assert (tmp_path / "energies.csv").read_text().count("\n") == 1


def test_run_writes_artifacts_and_holds_bounds(tmp_path):
    cfg = base_config(tmp_path, vtk_every=2)
    state = run_simulation(cfg)
    assert len(state.ledger) == 5
    assert np.abs(state.phi.values).max() <= 1.0
    d = state.mesh.dirichlet_mask
    assert np.all(state.w.values[d] == cfg.u_D)
    assert (tmp_path / "energies.csv").exists()
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "fields_000000.vtk").exists()
    assert (tmp_path / "fields_000002.vtk").exists()
    assert (tmp_path / "fields_final.vtk").exists()
    assert all(r.stab2_holds and r.stab3_holds for r in state.ledger)


def test_run_steady_state_preserved(tmp_path):
    # liquid everywhere, supercooling above threshold, rho(1) = 0 shape
    cfg = base_config(tmp_path, initial="liquid", shape="linear", u_D=-1000.0,
                      T_end=10e-5)
    state = run_simulation(cfg)
    assert np.all(state.phi.values == 1.0)
    assert np.abs(state.w.values - cfg.u_D).max() <= 1e-7


def test_run_strict_mode_passes_clean_runs(tmp_path):
    cfg = base_config(tmp_path)
    state = run_simulation(cfg, strict=True)
    assert len(state.ledger) == 5


def test_run_theta_zero_const_shape_collapses(tmp_path):
    # the reduced model (theta = 0, constant shape) runs the same machinery
    cfg = base_config(tmp_path, shape="const", rho=1e-3)
    state = run_simulation(cfg)
    assert all(r.stab2_holds for r in state.ledger)


def test_run_smooth_scheme_logs_bound_flags(tmp_path):
    cfg = base_config(tmp_path, potential="quartic", shape="quartic-shape",
                      rho=1e-3)
    state = run_simulation(cfg)
    assert len(state.ledger) == 5
    assert all(r.phi_within_split_bound for r in state.ledger)


def test_run_adaptive_remesh(tmp_path):
    cfg = base_config(tmp_path, N_f=32, N_c=16, adaptive=True, T_end=3e-5)
    state = run_simulation(cfg)
    assert len(state.ledger) == 3
    state.mesh.check_conforming()
    n_f = build_uniform_mesh(0.5, 32, 2, "dirichlet").n_elements
    assert state.mesh.n_elements < n_f
    assert all(r.stab2_holds for r in state.ledger)


def test_run_aborts_cleanly_with_partial_outputs(tmp_path):
    import json

    from anisopf.errors import NonConvergence

    cfg = base_config(tmp_path, method="active-set", max_outer=1, u_D=-2.0)
    with pytest.raises(NonConvergence) as err:
        run_simulation(cfg)
    assert "step 1" in str(err.value)
    assert (tmp_path / "energies.csv").exists()
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["error"] is not None and "step 1" in doc["error"]
