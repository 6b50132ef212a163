"""Run configuration, artifact writers, and manifests.

Configs are flat key=value text files (# comments allowed); CLI flags
override file values.  All artifact writers format floats with repr
(shortest round-trip), so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .convolution import DensityField, Grid2D
from .forces import ForceParams, TensorField, build_homogeneous_tensor, load_tensor_field

__all__ = [
    "RunConfig",
    "parse_config_file",
    "write_snapshot_csv",
    "write_pgm",
    "write_diagnostics_csv",
    "write_crosssection_csv",
    "write_rows_csv",
    "write_manifest",
]


@dataclass
class RunConfig:
    """Validated knobs for an experiment; mirrors the flat config keys."""

    grid: int = 50
    delta: float = 1e-10
    alpha: float = 270.0
    beta: float = 0.1
    gamma: float = 10.5
    e_A: float = 95.0
    e_R: float = 100.0
    chi: float = 0.2
    cutoff: float = 0.5
    eta: float = 1.0
    q: int = 4
    tensor: str = "s:0,1"
    init: str = "disc:0,0,0.05"
    safety: float = 0.9
    tol_stat: float = 1e-8
    max_steps: int = 100_000
    snapshot_every: int = 0
    diag_every: int = 1
    seed: int = 0
    out: str = "run"
    # 1-d experiment knobs
    m: int = 1024
    half_width: float = 2.0
    damping: float = 0.5
    pot_m: int = 1025
    delta_frac: float = 0.5
    l_values: str = "0.1,0.2,0.4,0.8,1.6,3.2"
    delta_fracs: str = "0.8,0.4,0.2,0.1"
    stripes_n: int = 3
    # particle knobs
    n_particles: int = 400
    p_steps: int = 100_000
    dt_frac: float = 0.2
    table_cache: str = ""
    dump_crosssection: bool = False

    def __post_init__(self):
        if self.grid <= 0:
            raise ValueError("grid must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not 0.0 < self.safety:
            raise ValueError("safety must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        self.force_params()  # run the ForceParams validation

    def force_params(self) -> ForceParams:
        return ForceParams(
            alpha=self.alpha, beta=self.beta, gamma=self.gamma,
            e_A=self.e_A, e_R=self.e_R, chi=self.chi, cutoff=self.cutoff,
        )

    def make_grid(self) -> Grid2D:
        return Grid2D(self.grid, self.grid)

    def make_tensor(self, base: Path | None = None) -> TensorField:
        kind, _, arg = self.tensor.partition(":")
        if kind == "s":
            parts = [float(v) for v in arg.split(",")]
            if len(parts) != 2:
                raise ValueError(f"tensor spec {self.tensor!r}: expected s:sx,sy")
            return build_homogeneous_tensor(parts, self.grid, self.grid)
        if kind == "file":
            path = Path(arg)
            if base is not None and not path.is_absolute():
                path = base / path
            if not path.exists():
                raise ValueError(f"tensor field file {path} does not exist")
            field_ = load_tensor_field(path)
            if field_.shape != (self.grid, self.grid):
                raise ValueError(
                    f"tensor field {path} is {field_.shape}, grid is {self.grid}"
                )
            return field_
        raise ValueError(f"unknown tensor spec {self.tensor!r}")


_BOOL_KEYS = {"dump_crosssection"}


def parse_config_file(path) -> dict:
    """Flat key=value lines into a dict typed against RunConfig's fields."""
    types = {f.name: type(f.default) for f in RunConfig.__dataclass_fields__.values()}
    out = {}
    base = Path(path).parent
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in _BOOL_KEYS:
                out[key] = val.lower() in ("1", "true", "yes")
            else:
                out[key] = types[key](val)
    out["_base"] = base  # paths in the file resolve relative to it
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_snapshot_csv(path, rho: DensityField) -> None:
    grid = rho.grid
    xc = grid.x_centers()
    yc = grid.y_centers()
    lines = ["i,j,x,y,rho"]
    for i in range(grid.nx):
        for j in range(grid.ny):
            lines.append(f"{i},{j},{_fmt(xc[i])},{_fmt(yc[j])},{_fmt(rho.values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_pgm(path, rho: DensityField, maxval: int = 255) -> None:
    """P2 grayscale of rho scaled to [0, max rho]; row 0 is y = +1/2."""
    v = rho.values
    top = v.max()
    img = np.zeros_like(v, dtype=int) if top <= 0 else np.rint(v / top * maxval).astype(int)
    lines = ["P2", f"{rho.grid.nx} {rho.grid.ny}", str(maxval)]
    for j in range(rho.grid.ny - 1, -1, -1):
        lines.append(" ".join(str(img[i, j]) for i in range(rho.grid.nx)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_diagnostics_csv(path, history) -> None:
    lines = ["n,t,dt,mass,comx,comy,min,max,l2,umax"]
    for d in history:
        lines.append(
            f"{d.n},{_fmt(d.t)},{_fmt(d.dt)},{_fmt(d.mass)},{_fmt(d.com_x)},"
            f"{_fmt(d.com_y)},{_fmt(d.rho_min)},{_fmt(d.rho_max)},{_fmt(d.l2)},{_fmt(d.u_max)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_crosssection_csv(path, rho: DensityField) -> None:
    """Mid-row profile: rho at j = ny//2 against x."""
    j = rho.grid.ny // 2
    xc = rho.grid.x_centers()
    lines = ["x,rho"]
    for i in range(rho.grid.nx):
        lines.append(f"{_fmt(xc[i])},{_fmt(rho.values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_rows_csv(path, header: str, rows) -> None:
    """Generic small-table writer; row entries are formatted with repr."""
    lines = [header]
    for row in rows:
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(path, config: RunConfig, extra: dict) -> None:
    payload = {"config": asdict(config), **extra, "wall_time_s": extra.get("wall_time_s")}
    payload.setdefault("written_at", time.strftime("%Y-%m-%dT%H:%M:%S"))
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
