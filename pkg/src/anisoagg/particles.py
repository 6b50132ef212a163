"""Interacting-particle model: the microscopic oracle for the continuum runs.

dx_j/dt = (1/N) sum_{k != j} F(x_j - x_k, T(x_j)) on the periodic unit
square, integrated with explicit Euler and minimum-image differences.
Forces are O(N^2) per step; at desk scale (N <= 5000) no neighbor lists
are warranted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convolution import DensityField, Grid2D
from .forces import ForceParams, TensorField, coeff_l, coeff_s

__all__ = ["ParticleEnsemble", "particle_step", "histogram", "random_ensemble"]


def _wrap(x):
    """Map coordinates into [-1/2, 1/2)."""
    return x - np.floor(x + 0.5)


@dataclass
class ParticleEnsemble:
    positions: np.ndarray  # (N, 2), wrapped
    tensor: TensorField
    params: ForceParams
    eta: float = 1.0

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be (N, 2)")
        self.positions = _wrap(np.asarray(self.positions, dtype=float))

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def random_ensemble(n: int, tensor: TensorField, params: ForceParams,
                    rng: np.random.Generator, eta: float = 1.0) -> ParticleEnsemble:
    pos = rng.random((n, 2)) - 0.5
    return ParticleEnsemble(positions=pos, tensor=tensor, params=params, eta=eta)


def _tensor_at(ens: ParticleEnsemble):
    """Per-particle (s, l) sampled at the particle's cell of the tensor grid."""
    nx, ny = ens.tensor.shape
    i = np.clip(((ens.positions[:, 0] + 0.5) * nx).astype(int), 0, nx - 1)
    j = np.clip(((ens.positions[:, 1] + 0.5) * ny).astype(int), 0, ny - 1)
    return ens.tensor.sx[i, j], ens.tensor.sy[i, j]


def particle_step(ens: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Explicit Euler step; returns a new ensemble."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos = ens.positions
    dxm = _wrap(pos[:, 0][:, None] - pos[:, 0][None, :]) * ens.eta
    dym = _wrap(pos[:, 1][:, None] - pos[:, 1][None, :]) * ens.eta
    r = np.hypot(dxm, dym)
    fs = coeff_s(r, ens.params) * ens.eta
    fl = coeff_l(r, ens.params) * ens.eta
    sx, sy = _tensor_at(ens)
    lx, ly = sy, -sx
    # row j = target particle: projections of each pair displacement
    ps = fs * (sx[:, None] * dxm + sy[:, None] * dym)
    pl = fl * (lx[:, None] * dxm + ly[:, None] * dym)
    fx = (ps.sum(axis=1) * sx + pl.sum(axis=1) * lx) / ens.n
    fy = (ps.sum(axis=1) * sy + pl.sum(axis=1) * ly) / ens.n
    new = np.empty_like(pos)
    new[:, 0] = pos[:, 0] + dt * fx
    new[:, 1] = pos[:, 1] + dt * fy
    return ParticleEnsemble(positions=_wrap(new), tensor=ens.tensor,
                            params=ens.params, eta=ens.eta)


def histogram(ens: ParticleEnsemble, grid: Grid2D) -> DensityField:
    """Cell-count histogram normalized to unit mass."""
    i = np.clip(((ens.positions[:, 0] + 0.5) * grid.nx).astype(int), 0, grid.nx - 1)
    j = np.clip(((ens.positions[:, 1] + 0.5) * grid.ny).astype(int), 0, grid.ny - 1)
    counts = np.zeros((grid.nx, grid.ny))
    np.add.at(counts, (i, j), 1.0)
    return DensityField(grid, counts / (ens.n * grid.cell_area))
