"""Conforming simplicial meshes of the box (-H, H)^d with bisection refinement.

Uniform meshes split every grid square into two triangles (d = 2) or every
grid cube into six tetrahedra sharing the main diagonal (d = 3, Kuhn
split).  Local refinement bisects the tagged edge of a simplex and
recursively forces the neighbours sharing that edge first, so the mesh
stays conforming; the tag bookkeeping follows the ordered-vertex bisection
rule for Kuhn-type meshes (new vertex replaces slot ``tag``, the tag
decreases cyclically).

The two-level strategy used by the simulator rebuilds, every time step, a
mesh that is uniformly fine (spacing 2H/N_f) inside the diffuse interface
band ``|phi| < 1`` and coarse (spacing 2H/N_c) elsewhere, then transfers
the nodal fields by piecewise-linear interpolation.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidN,
    MeshMismatch,
    RefinementDepthExceeded,
)

__all__ = [
    "SimplicialMesh",
    "NodalField",
    "TransferMap",
    "build_uniform_mesh",
    "adapt_to_interface",
    "transfer_field",
]

_BC_CASES = ("dirichlet", "neumann", "mixed")


class _Elem:
    __slots__ = ("verts", "tag", "gen", "parent", "children", "active")

    def __init__(self, verts, tag, gen, parent=None):
        self.verts = verts
        self.tag = tag
        self.gen = gen
        self.parent = parent
        self.children = None
        self.active = True


class SimplicialMesh:
    """Simplicial mesh of (-H, H)^d with boundary tags and refinement forest.

    Instances are created by :func:`build_uniform_mesh` and refined through
    :func:`adapt_to_interface`; once handed to the assembly they are
    treated as immutable.
    """

    def __init__(self, H, N, dim, bc_case):
        if bc_case not in _BC_CASES:
            raise ValueError(f"unknown boundary case {bc_case!r}")
        self.H = float(H)
        self.N0 = int(N)
        self.dim = int(dim)
        self.bc_case = bc_case
        self._coords = []
        self._elems = []
        self._vert_elems = []
        self._edge_mid = {}
        self._perms = list(itertools.permutations(range(dim)))
        self._perm_index = {p: i for i, p in enumerate(self._perms)}
        self._cache = None
        self._vertex_lookup = {}

    # -- construction ---------------------------------------------------

    def _add_vertex(self, xyz):
        self._coords.append(np.asarray(xyz, dtype=float))
        self._vert_elems.append(set())
        return len(self._coords) - 1

    def _add_elem(self, verts, tag, gen, parent=None):
        eid = len(self._elems)
        self._elems.append(_Elem(tuple(verts), tag, gen, parent))
        for v in verts:
            self._vert_elems[v].add(eid)
        return eid

    def _deactivate(self, eid):
        el = self._elems[eid]
        el.active = False
        for v in el.verts:
            self._vert_elems[v].discard(eid)

    # -- refinement -----------------------------------------------------

    def _bisection_edge(self, eid):
        el = self._elems[eid]
        return el.verts[0], el.verts[el.tag]

    def _midpoint(self, a, b):
        key = (a, b) if a < b else (b, a)
        vid = self._edge_mid.get(key)
        if vid is None:
            vid = self._add_vertex(0.5 * (self._coords[a] + self._coords[b]))
            self._edge_mid[key] = vid
        return vid

    def _edge_sharers(self, a, b):
        return sorted(self._vert_elems[a] & self._vert_elems[b])

    def _split(self, eid, z):
        el = self._elems[eid]
        v = el.verts
        t = el.tag
        newtag = t - 1 if t > 1 else self.dim
        c1 = v[:t] + (z,) + v[t + 1:]
        c2 = v[1:t + 1] + (z,) + v[t + 1:]
        self._deactivate(eid)
        el.children = (
            self._add_elem(c1, newtag, el.gen + 1, eid),
            self._add_elem(c2, newtag, el.gen + 1, eid),
        )

    def _refine(self, eid, gen_cap, _depth=0):
        """Bisect element ``eid`` conformingly (recursive closure)."""
        el = self._elems[eid]
        if not el.active:
            return
        if _depth > gen_cap + 4:
            raise RefinementDepthExceeded(
                f"closure recursion exceeded {gen_cap + 4} levels")
        if el.gen >= gen_cap:
            raise RefinementDepthExceeded(
                f"element generation would exceed cap {gen_cap}")
        a, b = self._bisection_edge(eid)
        for _pass in range(64):
            sharers = self._edge_sharers(a, b)
            bad = [e for e in sharers
                   if set(self._bisection_edge(e)) != {a, b}]
            if not bad:
                break
            for e in bad:
                self._refine(e, gen_cap, _depth + 1)
        else:
            raise RefinementDepthExceeded("edge closure did not stabilize")
        z = self._midpoint(a, b)
        for e in sharers:
            self._split(e, z)
        self._cache = None

    # -- finalized views -------------------------------------------------

    def _finalize(self):
        if self._cache is not None:
            return self._cache
        active = [i for i, el in enumerate(self._elems) if el.active]
        elements = np.array([self._elems[i].verts for i in active], dtype=np.int64)
        vertices = np.array(self._coords, dtype=float)
        P = vertices[elements]                       # (ne, d+1, d)
        T = np.swapaxes(P[:, 1:, :] - P[:, :1, :], 1, 2)   # (ne, d, d)
        det = np.linalg.det(T)
        volumes = np.abs(det) / math.factorial(self.dim)
        Tinv = np.linalg.inv(T)                      # rows of Tinv = grad lambda_k
        grads = np.empty((len(active), self.dim + 1, self.dim))
        grads[:, 1:, :] = Tinv
        grads[:, 0, :] = -Tinv.sum(axis=1)
        diam = np.zeros(len(active))
        for i in range(self.dim + 1):
            for j in range(i + 1, self.dim + 1):
                diam = np.maximum(diam, np.linalg.norm(P[:, i] - P[:, j], axis=1))
        onb = np.zeros(len(vertices), dtype=bool)
        tol = 1e-12 * max(1.0, self.H)
        for k in range(self.dim):
            onb |= np.abs(vertices[:, k] - self.H) <= tol
            onb |= np.abs(vertices[:, k] + self.H) <= tol
        if self.bc_case == "dirichlet":
            dirichlet = onb.copy()
        elif self.bc_case == "neumann":
            dirichlet = np.zeros_like(onb)
        else:
            dirichlet = np.abs(vertices[:, -1] - self.H) <= tol
        self._cache = {
            "active": active,
            "elements": elements,
            "vertices": vertices,
            "volumes": volumes,
            "grads": grads,
            "diameters": diam,
            "boundary_mask": onb,
            "dirichlet_mask": dirichlet,
        }
        return self._cache

    @property
    def vertices(self):
        return self._finalize()["vertices"]

    @property
    def elements(self):
        return self._finalize()["elements"]

    @property
    def volumes(self):
        return self._finalize()["volumes"]

    @property
    def grads(self):
        return self._finalize()["grads"]

    @property
    def diameters(self):
        return self._finalize()["diameters"]

    @property
    def boundary_mask(self):
        return self._finalize()["boundary_mask"]

    @property
    def dirichlet_mask(self):
        return self._finalize()["dirichlet_mask"]

    @property
    def n_vertices(self):
        return len(self._coords)

    @property
    def n_elements(self):
        return len(self._finalize()["active"])

    @property
    def boundary_tags(self):
        """Map boundary vertex id -> 'dirichlet' | 'neumann'."""
        c = self._finalize()
        tags = {}
        for v in np.nonzero(c["boundary_mask"])[0]:
            tags[int(v)] = "dirichlet" if c["dirichlet_mask"][v] else "neumann"
        return tags

    def field_gradients(self, values):
        """Per-element constant gradient of a nodal field, shape (ne, d)."""
        c = self._finalize()
        values = np.asarray(values, dtype=float)
        if values.shape[0] != len(c["vertices"]):
            raise MeshMismatch("field length does not match vertex count")
        return np.einsum("ekd,ek->ed", c["grads"], values[c["elements"]])

    # -- conformity audit -------------------------------------------------

    def check_conforming(self):
        """Face-matching audit; raises AssertionError on a hanging face."""
        c = self._finalize()
        counts = {}
        for elem in c["elements"]:
            for drop in range(self.dim + 1):
                face = tuple(sorted(v for i, v in enumerate(elem) if i != drop))
                counts[face] = counts.get(face, 0) + 1
        tol = 1e-12 * max(1.0, self.H)
        verts = c["vertices"]
        for face, cnt in counts.items():
            if cnt == 2:
                continue
            if cnt != 1:
                raise AssertionError(f"face {face} shared by {cnt} elements")
            on_plane = False
            for k in range(self.dim):
                for side in (-self.H, self.H):
                    if np.all(np.abs(verts[list(face), k] - side) <= tol):
                        on_plane = True
            if not on_plane:
                raise AssertionError(f"interior face {face} has one owner")
        return True

    # -- point location ----------------------------------------------------

    def _barycentric(self, eid, x):
        el = self._elems[eid]
        P = np.array([self._coords[v] for v in el.verts])
        A = np.vstack([np.ones(self.dim + 1), P.T])
        rhs = np.concatenate([[1.0], x])
        return np.linalg.solve(A, rhs)

    def locate(self, points):
        """Containing active element and barycentric weights per point.

        Returns (elem_ids, bary) with elem_ids internal element indices and
        bary of shape (n, d+1) ordered like the element's vertex tuple.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        h = 2.0 * self.H / self.N0
        rel = (points + self.H) / h
        cells = np.clip(np.floor(rel).astype(np.int64), 0, self.N0 - 1)
        frac = rel - cells
        order = np.argsort(-frac, axis=1, kind="stable")
        lin = cells[:, 0]
        for k in range(1, self.dim):
            lin = lin * self.N0 + cells[:, k]
        nperm = len(self._perms)
        eids = np.empty(n, dtype=np.int64)
        bary = np.empty((n, self.dim + 1))
        for i in range(n):
            pid = self._perm_index[tuple(order[i])]
            eid = int(lin[i]) * nperm + pid
            lam = self._barycentric(eid, points[i])
            while self._elems[eid].children is not None:
                best, best_lam, best_min = None, None, -np.inf
                for ch in self._elems[eid].children:
                    lam_c = self._barycentric(ch, points[i])
                    m = lam_c.min()
                    if m > best_min:
                        best, best_lam, best_min = ch, lam_c, m
                eid, lam = best, best_lam
            eids[i] = eid
            bary[i] = lam
        return eids, bary

    def interpolate(self, values, points):
        """Evaluate the P1 interpolant of nodal ``values`` at ``points``."""
        eids, bary = self.locate(points)
        values = np.asarray(values, dtype=float)
        out = np.empty(len(eids))
        for i, (eid, lam) in enumerate(zip(eids, bary)):
            idx = list(self._elems[eid].verts)
            lam = np.clip(lam, 0.0, None)
            lam = lam / lam.sum()
            out[i] = float(lam @ values[idx])
        return out


@dataclass
class NodalField:
    """Nodal values of a continuous piecewise-linear function."""

    values: np.ndarray
    mesh: SimplicialMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise MeshMismatch("value array does not match mesh vertex count")


@dataclass
class TransferMap:
    """Interpolation data moving nodal fields from ``source`` to ``target``."""

    source: SimplicialMesh
    target: SimplicialMesh
    vert_ids: np.ndarray     # (n_target, d+1) source vertex indices
    weights: np.ndarray      # (n_target, d+1) convex weights


def build_uniform_mesh(H, N, dim=2, bc_case="dirichlet"):
    """Uniform Kuhn mesh of (-H, H)^dim with N cells per direction."""
    if N < 2 or N % 2 != 0:
        raise InvalidN(f"N must be an even count >= 2, got {N}")
    if dim not in (2, 3):
        raise InvalidN(f"dim must be 2 or 3, got {dim}")
    mesh = SimplicialMesh(H, N, dim, bc_case)
    axes = [np.linspace(-H, H, N + 1) for _ in range(dim)]
    if dim == 2:
        for ix in range(N + 1):
            for iy in range(N + 1):
                mesh._add_vertex((axes[0][ix], axes[1][iy]))

        def vid(ix, iy):
            return ix * (N + 1) + iy
    else:
        for ix in range(N + 1):
            for iy in range(N + 1):
                for iz in range(N + 1):
                    mesh._add_vertex((axes[0][ix], axes[1][iy], axes[2][iz]))

        def vid(ix, iy, iz=0):
            return (ix * (N + 1) + iy) * (N + 1) + iz

    unit = np.eye(dim, dtype=np.int64)
    cells = itertools.product(*(range(N) for _ in range(dim)))
    for cell in cells:
        base = np.array(cell, dtype=np.int64)
        for perm in mesh._perms:
            corner = base.copy()
            verts = [vid(*corner)]
            for k in perm:
                corner = corner + unit[k]
                verts.append(vid(*corner))
            mesh._add_elem(verts, dim, 0)
    return mesh


def adapt_to_interface(mesh, phi, N_f, N_c):
    """Two-level re-mesh: fine spacing 2H/N_f inside ``|phi| < 1``.

    Starting from the uniform N_c mesh, elements whose interpolated phase
    value is strictly inside (-1, 1) at some vertex, together with one
    layer of vertex-neighbours, are bisected until their diameter drops to
    the fine-mesh diameter sqrt(d) * 2H/N_f.  Returns the new mesh and the
    transfer map for moving nodal fields onto it.
    """
    if N_f < N_c or N_f % N_c != 0 or ((N_f // N_c) & (N_f // N_c - 1)) != 0:
        raise InvalidN(f"N_f={N_f} must be a power-of-two multiple of N_c={N_c}")
    d = mesh.dim
    new = build_uniform_mesh(mesh.H, N_c, d, mesh.bc_case)
    levels = int(round(math.log2(N_f // N_c)))
    gen_cap = max(0, 2 * levels * d)
    target = math.sqrt(d) * (2.0 * mesh.H / N_f) * (1.0 + 1e-9)

    phi_at = {}

    def phi_values():
        missing = [v for v in range(new.n_vertices) if v not in phi_at]
        if missing:
            pts = np.array([new._coords[v] for v in missing])
            vals = mesh.interpolate(phi.values, pts)
            for v, val in zip(missing, vals):
                phi_at[v] = val
        return phi_at

    for _round in range(8 * (levels + 1) * d + 8):
        vals = phi_values()
        cache = new._finalize()
        marked = set()
        for pos, eid in enumerate(cache["active"]):
            if cache["diameters"][pos] <= target:
                continue
            if any(abs(vals[v]) < 1.0 - 1e-7 for v in new._elems[eid].verts):
                marked.add(eid)
        layer = set()
        for eid in marked:
            for v in new._elems[eid].verts:
                layer.update(new._vert_elems[v])
        for pos, eid in enumerate(cache["active"]):
            if eid in layer and eid not in marked and cache["diameters"][pos] > target:
                marked.add(eid)
        if not marked:
            break
        for eid in sorted(marked):
            if new._elems[eid].active:
                new._refine(eid, gen_cap)
    else:
        raise RefinementDepthExceeded("marking loop did not terminate")

    pts = np.array([new._coords[v] for v in range(new.n_vertices)])
    eids, bary = mesh.locate(pts)
    vert_ids = np.empty((new.n_vertices, d + 1), dtype=np.int64)
    weights = np.clip(bary, 0.0, None)
    weights = weights / weights.sum(axis=1, keepdims=True)
    for i, eid in enumerate(eids):
        vert_ids[i] = mesh._elems[eid].verts
    return new, TransferMap(mesh, new, vert_ids, weights)


def transfer_field(field, tmap):
    """Interpolate a nodal field through a transfer map."""
    if field.mesh is not tmap.source:
        raise MeshMismatch("field does not live on the map's source mesh")
    vals = field.values[tmap.vert_ids]
    return NodalField((tmap.weights * vals).sum(axis=1), tmap.target)
