"""Interaction force law and tensor fields.

The pairwise force acting on a point at displacement d from a source is

    F(d, T) = f_s(|d|) (s.d) s + f_l(|d|) (l.d) l

with f_s = f_R + chi*f_A and f_l = f_R + f_A built from the exponential
repulsion/attraction coefficients

    f_R(t) = (alpha t^2 + beta) exp(-e_R t),   f_A(t) = -gamma t exp(-e_A t).

Both coefficients are truncated to exactly zero for t >= cutoff (their raw
values there are O(1e-20) for the default constants, far below solver noise,
and the hard zero makes W'(+-1/2) = 0 exact for the torus stripe analysis).

The unit vector s is the local preferred direction; l = (s_y, -s_x) is its
clockwise rotation.  Forces are invariant under l -> -l, so the rotation
choice is free.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ForceParams",
    "TensorField",
    "DEFAULT_PARAMS",
    "repulsion_coeff",
    "attraction_coeff",
    "coeff_s",
    "coeff_l",
    "total_force",
    "build_homogeneous_tensor",
    "load_tensor_field",
    "save_tensor_field",
]


@dataclass(frozen=True)
class ForceParams:
    """Constants of the exponential force law plus the anisotropy weight chi."""

    alpha: float = 270.0
    beta: float = 0.1
    gamma: float = 10.5
    e_A: float = 95.0
    e_R: float = 100.0
    chi: float = 0.2
    cutoff: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "e_A", "e_R"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError("chi must lie in [0, 1]")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    def with_(self, **kw) -> "ForceParams":
        return replace(self, **kw)


DEFAULT_PARAMS = ForceParams()


def _check_tau(tau):
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be nonnegative")


def repulsion_coeff(tau, p: ForceParams = DEFAULT_PARAMS):
    """f_R(tau), zero at and beyond the cutoff radius."""
    _check_tau(tau)
    tau = np.asarray(tau, dtype=float)
    raw = (p.alpha * tau * tau + p.beta) * np.exp(-p.e_R * tau)
    out = np.where(tau < p.cutoff, raw, 0.0)
    return out if out.ndim else float(out)


def attraction_coeff(tau, p: ForceParams = DEFAULT_PARAMS):
    """f_A(tau) <= 0, zero at and beyond the cutoff radius."""
    _check_tau(tau)
    tau = np.asarray(tau, dtype=float)
    raw = -p.gamma * tau * np.exp(-p.e_A * tau)
    out = np.where(tau < p.cutoff, raw, 0.0)
    return out if out.ndim else float(out)


def coeff_s(tau, p: ForceParams = DEFAULT_PARAMS):
    """f_s = f_R + chi f_A (force coefficient along s)."""
    return repulsion_coeff(tau, p) + p.chi * attraction_coeff(tau, p)


def coeff_l(tau, p: ForceParams = DEFAULT_PARAMS):
    """f_l = f_R + f_A (force coefficient along l)."""
    return repulsion_coeff(tau, p) + attraction_coeff(tau, p)


def _check_unit_pair(s, l):
    s = np.asarray(s, dtype=float)
    l = np.asarray(l, dtype=float)
    if abs(np.hypot(*s) - 1.0) > 1e-9 or abs(np.hypot(*l) - 1.0) > 1e-9:
        raise ValueError("s and l must be unit vectors")
    if abs(s @ l) > 1e-9:
        raise ValueError("s and l must be orthogonal")
    return s, l


def total_force(d, s, l, p: ForceParams = DEFAULT_PARAMS, eta: float = 1.0):
    """F(eta*d, T) for unit vectors s, l; eta > 1 shrinks the interaction range."""
    s, l = _check_unit_pair(s, l)
    d = np.asarray(d, dtype=float) * eta
    r = np.hypot(d[..., 0], d[..., 1])
    ps = d[..., 0] * s[0] + d[..., 1] * s[1]
    pl = d[..., 0] * l[0] + d[..., 1] * l[1]
    cs = coeff_s(r, p) * ps
    cl = coeff_l(r, p) * pl
    return np.stack([cs * s[0] + cl * l[0], cs * s[1] + cl * l[1]], axis=-1)


@dataclass(frozen=True)
class TensorField:
    """Per-cell orthonormal direction pair on an nx-by-ny grid.

    sx, sy hold the unit direction of smallest stress; the largest-stress
    direction is derived as l = (s_y, -s_x).  A field is homogeneous when
    every cell carries the same s.
    """

    sx: np.ndarray
    sy: np.ndarray

    def __post_init__(self):
        if self.sx.shape != self.sy.shape or self.sx.ndim != 2:
            raise ValueError("sx, sy must be 2-d arrays of equal shape")
        norms = np.hypot(self.sx, self.sy)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("tensor directions must be unit vectors")

    @property
    def shape(self):
        return self.sx.shape

    @property
    def lx(self) -> np.ndarray:
        return self.sy

    @property
    def ly(self) -> np.ndarray:
        return -self.sx

    @property
    def homogeneous(self) -> bool:
        return bool(np.all(self.sx == self.sx.flat[0]) and np.all(self.sy == self.sy.flat[0]))

    def key_bytes(self) -> bytes:
        """Stable byte digest input for cache keys."""
        return self.sx.tobytes() + self.sy.tobytes()


def build_homogeneous_tensor(s, nx: int, ny: int) -> TensorField:
    """Replicate one direction on all cells; s is normalized first."""
    s = np.asarray(s, dtype=float)
    n = np.hypot(s[0], s[1])
    if n == 0.0:
        raise ValueError("direction vector must be nonzero")
    sx = np.full((nx, ny), s[0] / n)
    sy = np.full((nx, ny), s[1] / n)
    return TensorField(sx, sy)


def load_tensor_field(path) -> TensorField:
    """Read a tensor field file: header "nx ny", then "i j s_x s_y" per cell.

    Rows are expected in row-major (i fastest varying last) order but are
    placed by their explicit indices; vectors are normalized on load.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: expected header 'nx ny'")
        nx, ny = int(header[0]), int(header[1])
        if nx <= 0 or ny <= 0:
            raise ValueError(f"{path}: grid dimensions must be positive")
        sx = np.full((nx, ny), np.nan)
        sy = np.full((nx, ny), np.nan)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'i j s_x s_y'")
            i, j = int(parts[0]), int(parts[1])
            if not (0 <= i < nx and 0 <= j < ny):
                raise ValueError(f"{path}:{lineno}: cell index ({i},{j}) outside {nx}x{ny}")
            vx, vy = float(parts[2]), float(parts[3])
            n = np.hypot(vx, vy)
            if n == 0.0:
                raise ValueError(f"{path}:{lineno}: zero direction vector")
            sx[i, j] = vx / n
            sy[i, j] = vy / n
    if np.isnan(sx).any():
        raise ValueError(f"{path}: missing cells (expected {nx * ny} rows)")
    return TensorField(sx, sy)


def save_tensor_field(path, field: TensorField) -> None:
    nx, ny = field.shape
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for i in range(nx):
            for j in range(ny):
                fh.write(f"{i} {j} {field.sx[i, j]!r} {field.sy[i, j]!r}\n")
    os.replace(tmp, path)
