"""Deterministic file writers: legacy VTK, energy CSV, JSON run report.

All floating point values are printed with 17 significant digits, which
round-trips IEEE doubles exactly, and files use LF line endings, so a
given state always produces byte-identical output.
"""

import json
import os

import numpy as np

__all__ = ["write_vtk", "write_energy_csv", "write_report_json", "OutputWriter"]

_CELL_TYPE = {2: 5, 3: 10}  # VTK_TRIANGLE, VTK_TETRA


def _fmt(x):
    return f"{float(x):.17g}"


def write_vtk(state, path):
    """Write phi and w as point data on the mesh, legacy ASCII format."""
    mesh = state.mesh
    verts = mesh.vertices
    elems = mesh.elements
    nv, d = verts.shape
    with open(path, "w", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("anisotropic phase field state\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {nv} double\n")
        for p in verts:
            coords = list(p) + [0.0] * (3 - d)
            f.write(" ".join(_fmt(c) for c in coords) + "\n")
        ne = len(elems)
        f.write(f"CELLS {ne} {ne * (d + 2)}\n")
        for el in elems:
            f.write(f"{d + 1} " + " ".join(str(int(v)) for v in el) + "\n")
        f.write(f"CELL_TYPES {ne}\n")
        for _ in range(ne):
            f.write(f"{_CELL_TYPE[d]}\n")
        f.write(f"POINT_DATA {nv}\n")
        for name, vals in (("phi", state.phi.values), ("w", state.w.values)):
            f.write(f"SCALARS {name} double\n")
            f.write("LOOKUP_TABLE default\n")
            for v in vals:
                f.write(_fmt(v) + "\n")


_CSV_HEADER = ("t,E_h,F_h,diffusive_dissipation,kinetic_dissipation,"
               "stab2_slack,stab3_slack")


def write_energy_csv(ledger, path):
    """One row per accepted step; header only for an empty ledger."""
    with open(path, "w", newline="\n") as f:
        f.write(_CSV_HEADER + "\n")
        for row in ledger:
            f.write(",".join(_fmt(v) for v in (
                row.t, row.E_h, row.F_h, row.diffusive, row.kinetic,
                row.stab2_slack, row.stab3_slack)) + "\n")


def write_report_json(cfg, state, path, error=None):
    """Machine-readable run summary: config echo and per-step diagnostics."""
    rows = state.ledger
    reports = state.reports
    doc = {
        "config": cfg.to_dict(),
        "steps_completed": len(rows),
        "final_time": state.t,
        "error": error,
        "stab2_violations": sum(1 for r in rows if not r.stab2_holds),
        "stab3_violations": sum(1 for r in rows if not r.stab3_holds),
        "phi_bound_violations": sum(
            1 for r in rows if not r.phi_within_split_bound),
        "solver": [
            {
                "method": r.method,
                "outer": r.outer_iterations,
                "inner": r.inner_iterations,
                "pgs_sweeps": r.pgs_sweeps,
                "active_plus": r.active_plus,
                "active_minus": r.active_minus,
                "converged": r.converged,
                "wall_time": r.wall_time,
            }
            for r in reports
        ],
        "phi_min": float(np.min(state.phi.values)),
        "phi_max": float(np.max(state.phi.values)),
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


class OutputWriter:
    """Owns the output directory of one run."""

    def __init__(self, cfg, out_dir=None):
        self.cfg = cfg
        self.dir = out_dir or cfg.out_dir
        self.vtk_every = cfg.vtk_every
        os.makedirs(self.dir, exist_ok=True)

    def vtk_snapshot(self, state, step):
        if self.vtk_every > 0 and step % self.vtk_every == 0:
            write_vtk(state, os.path.join(self.dir, f"fields_{step:06d}.vtk"))

    def finalize(self, state, error=None):
        write_energy_csv(state.ledger, os.path.join(self.dir, "energies.csv"))
        write_report_json(self.cfg, state, os.path.join(self.dir, "report.json"),
                          error=error)
        if self.vtk_every > 0:
            write_vtk(state, os.path.join(self.dir, "fields_final.vtk"))
