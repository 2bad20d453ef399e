"""Interface measurements on nodal phase fields."""

import numpy as np

__all__ = ["zero_level_radii", "count_radial_maxima"]


def zero_level_radii(mesh, phi, n_angles=720, r_max=None):
    """Polar radius of the zero level set along rays from the origin.

    Bisects the P1 interpolant along each ray, assuming the phase is
    negative at the centre and positive at ``r_max``.  Angles where the
    sign assumption fails produce NaN.
    """
    phi = np.asarray(phi, dtype=float)
    if r_max is None:
        r_max = 0.95 * mesh.H
    angles = np.arange(n_angles) * 2.0 * np.pi / n_angles
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    lo = np.full(n_angles, 1e-6)
    hi = np.full(n_angles, r_max)
    f_lo = mesh.interpolate(phi, lo[:, None] * dirs)
    f_hi = mesh.interpolate(phi, hi[:, None] * dirs)
    bad = (f_lo >= 0.0) | (f_hi <= 0.0)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        f_mid = mesh.interpolate(phi, mid[:, None] * dirs)
        below = f_mid < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    r = 0.5 * (lo + hi)
    r[bad] = np.nan
    return angles, r


def count_radial_maxima(r, window=15):
    """Count cyclic local maxima of a sampled radius function.

    The zero level of a P1 field is a polygon, so its raw radius function
    carries mesh-scale wiggles; a short circular moving average (default
    +-7 samples) removes them before the sign changes of the discrete
    derivative are counted.
    """
    r = np.asarray(r, dtype=float)
    n = len(r)
    if window > 1:
        half = window // 2
        padded = np.concatenate([r[-half:], r, r[:half]])
        r = np.convolve(padded, np.ones(window) / window, mode="valid")[:n]
    dr = np.diff(np.concatenate([r, r[:1]]))
    sign = np.sign(dr)
    nz = sign[sign != 0.0]
    if len(nz) == 0:
        return 0
    return int(sum(1 for i in range(len(nz))
                   if nz[i] > 0.0 and nz[(i + 1) % len(nz)] < 0.0))
