"""Double-well potentials, shape functions and their implicit/explicit splits.

Two potentials are supported: the quartic well Psi(s) = (s^2-1)^2/4 with the
convex/concave derivative split phi+(s) = s^3, phi-(s) = -s, and the
obstacle well Psi(s) = (1-s^2)/2 on [-1,1] whose constraint is handled by
the variational-inequality solver rather than by a derivative.

Shape functions rho weight the latent-heat coupling; each comes with the
exact interpolation function P (antiderivative with P(-1) = 0) and a split
rho = rho+ + rho- chosen so that the implicit part keeps the scheme's
energy estimate valid for the configured sign of the boundary supercooling.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NotApplicable

__all__ = [
    "PotentialSpec",
    "ShapeSpec",
    "phi_split",
    "shape_eval",
    "shape_cutoff",
    "diffusivity_b",
    "boundary_layer_check",
    "potential_from_name",
    "shape_from_name",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Double-well potential, ``obstacle`` or ``quartic``."""

    kind: str = "obstacle"

    def __post_init__(self):
        if self.kind not in ("obstacle", "quartic"):
            raise ValueError(f"unknown potential {self.kind!r}")

    @property
    def c_psi(self):
        """The constant int_{-1}^{1} sqrt(2 Psi)."""
        return math.pi / 2 if self.kind == "obstacle" else 2.0**1.5 / 3.0

    def psi(self, s):
        """Well value; obstacle values are only meaningful on [-1, 1]."""
        s = np.asarray(s, dtype=float)
        if self.kind == "obstacle":
            return 0.5 * (1.0 - s * s)
        return 0.25 * (s * s - 1.0) ** 2


def phi_split(pot, s):
    """Convex/concave derivative split (s^3, -s) of the quartic well."""
    if pot.kind != "quartic":
        raise NotApplicable("the obstacle well has no derivative split; "
                            "its constraint is enforced variationally")
    s = np.asarray(s, dtype=float)
    return s**3, -s


_SHAPE_KINDS = ("const", "lin-minus", "lin-plus", "quartic-shape")


@dataclass(frozen=True)
class ShapeSpec:
    """Shape function with its sign-adapted split.

    ``split_sign`` selects the split family: ``for-negative-uD`` keeps the
    implicit part nondecreasing (valid for u_D <= 0), ``for-positive-uD``
    the mirrored variant.  ``m`` is the clamp bound of the implicit part
    used by the smooth scheme (m >= 2).
    """

    kind: str = "lin-minus"
    split_sign: str = "for-negative-uD"
    m: float = 2.0

    def __post_init__(self):
        if self.kind not in _SHAPE_KINDS:
            raise ValueError(f"unknown shape {self.kind!r}")
        if self.split_sign not in ("for-negative-uD", "for-positive-uD"):
            raise ValueError(f"unknown split_sign {self.split_sign!r}")
        if self.m < 2.0:
            raise ValueError("cutoff m must be >= 2")

    def rho(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "const":
            return np.full_like(s, 0.5)
        if self.kind == "lin-minus":
            return 0.5 * (1.0 - s)
        if self.kind == "lin-plus":
            return 0.5 * (1.0 + s)
        return (15.0 / 16.0) * (s * s - 1.0) ** 2

    def rho_plus(self, s):
        """Implicit part of the split; zero except for the quartic shape."""
        s = np.asarray(s, dtype=float)
        if self.kind != "quartic-shape":
            return np.zeros_like(s)
        sign = 1.0 if self.split_sign == "for-negative-uD" else -1.0
        return sign * 1.5 * s

    def rho_minus(self, s):
        return self.rho(s) - self.rho_plus(s)

    def interp(self, s):
        """P(s), the exact antiderivative of rho with P(-1) = 0."""
        s = np.asarray(s, dtype=float)
        if self.kind == "const":
            return 0.5 * (s + 1.0)
        if self.kind == "lin-minus":
            return 0.5 * s - 0.25 * s * s + 0.75
        if self.kind == "lin-plus":
            return 0.5 * s + 0.25 * s * s + 0.25
        return (15.0 / 16.0) * (s**5 / 5.0 - 2.0 * s**3 / 3.0 + s) + 0.5

    def rho_plus_clamped(self, s):
        """rho+ evaluated with its argument clamped to [-m, m]."""
        s = np.clip(np.asarray(s, dtype=float), -self.m, self.m)
        return self.rho_plus(s)

    def rho_plus_deriv_clamped(self, s):
        """d/ds of the clamped implicit part (zero beyond the clamp)."""
        s = np.asarray(s, dtype=float)
        if self.kind != "quartic-shape":
            return np.zeros_like(s)
        sign = 1.0 if self.split_sign == "for-negative-uD" else -1.0
        return np.where(np.abs(s) <= self.m, sign * 1.5, 0.0)

    def rho_hat(self, s_old, s_new):
        """Semi-implicit weight rho-(old) + rho+(new), no clamp."""
        return self.rho_minus(s_old) + self.rho_plus(s_new)

    @property
    def implicit_part_is_zero(self):
        return self.kind != "quartic-shape"


def shape_eval(sh, s):
    """Evaluate (rho, rho+, rho-, P) at s."""
    return sh.rho(s), sh.rho_plus(s), sh.rho_minus(s), sh.interp(s)


def shape_cutoff(sh, s_old, s_new):
    """Semi-implicit weight with the implicit argument clamped at +-m."""
    return sh.rho_minus(s_old) + sh.rho_plus_clamped(s_new)


def diffusivity_b(s, Kplus, Kminus, clipped=False):
    """Phase-interpolated conductivity b(s) = (1+s)/2 K+ + (1-s)/2 K-.

    With ``clipped`` the argument is clamped to [-1, 1] first, keeping the
    value >= min(K+, K-) for out-of-range phase values.
    """
    s = np.asarray(s, dtype=float)
    if clipped:
        s = np.clip(s, -1.0, 1.0)
    return 0.5 * (1.0 + s) * Kplus + 0.5 * (1.0 - s) * Kminus


@dataclass(frozen=True)
class BoundaryLayerReport:
    stable_at_plus1: bool
    stable_at_minus1: bool
    critical_uD: float


def boundary_layer_check(pot, sh, eps, alpha, a, u_D):
    """Check whether the pure phases are steady under the supercooling.

    For the obstacle well, s = +-1 stay local minima of the effective bulk
    potential iff alpha/(a c_psi eps) +- u_D rho(+-1) >= 0; for the quartic
    well the fixed-point condition is u_D rho(+-1) = 0.  ``critical_uD`` is
    the obstacle-well threshold -alpha/(a c_psi eps rho(1)) below which a
    boundary layer detaches from +1 (or -inf when rho(1) = 0).
    """
    rho_p1 = float(sh.rho(1.0))
    rho_m1 = float(sh.rho(-1.0))
    bulk = alpha / (a * pot.c_psi * eps)
    if pot.kind == "obstacle":
        stable_p = bulk + u_D * rho_p1 >= 0.0
        stable_m = bulk - u_D * rho_m1 >= 0.0
    else:
        stable_p = u_D * rho_p1 == 0.0
        stable_m = u_D * rho_m1 == 0.0
    critical = -bulk / rho_p1 if rho_p1 > 0.0 else -math.inf
    return BoundaryLayerReport(bool(stable_p), bool(stable_m), critical)


def potential_from_name(name):
    return PotentialSpec(name)


def shape_from_name(name, u_D=0.0, m=2.0):
    """Resolve a config shape name; ``linear`` picks the branch by sign(u_D)."""
    split = "for-positive-uD" if u_D > 0.0 else "for-negative-uD"
    if name == "const":
        return ShapeSpec("const", split, m)
    if name == "linear":
        kind = "lin-plus" if u_D > 0.0 else "lin-minus"
        return ShapeSpec(kind, split, m)
    if name in _SHAPE_KINDS:
        return ShapeSpec(name, split, m)
    raise ValueError(f"unknown shape {name!r}")


def opposite_split(sh):
    """Same shape with the mirrored split (testing helper)."""
    other = ("for-positive-uD" if sh.split_sign == "for-negative-uD"
             else "for-negative-uD")
    return replace(sh, split_sign=other)
