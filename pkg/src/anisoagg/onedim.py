"""Dimension-reduced line-pattern theory on the real line and the torus.

For tensor fields with s = (0,1), stationary states are constant in y and
the problem collapses to one dimension with the scalar odd force

    G(x) = x * int_{-1/2}^{1/2} f_l(sqrt(x^2 + z^2)) dz,       G = -W',

and the even potential W, normalized so sup W = 0 (W <= 0).  W is constant
outside [-1/2, 1/2]; its tail value is zero exactly when the supremum is
attained at the cutoff, which holds when G <= 0 away from the origin
(integrable long-range attraction).  norm_l1 integrates |W| over the
varying part [-1/2, 1/2] either way.

Solvers on the line work on a uniform working grid over [-a, a] with the
plain Riemann mass sum(rho) * h and free-space (zero-padded) convolutions;
the torus stripe analysis uses signed minimum-image distances.  The two
conventions are separate entry points, never inferred.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, quad, simpson
from scipy.optimize import linprog
from scipy.signal import fftconvolve
from scipy.sparse import lil_matrix

from .forces import ForceParams, coeff_l

__all__ = [
    "Potential1D",
    "Density1D",
    "StripeConfig",
    "FixedPointResult",
    "MinimizeResult",
    "GammaReport",
    "scalar_force_G",
    "build_potential",
    "energy",
    "energy_delta",
    "stationary_fixed_point",
    "minimize_energy",
    "mollify",
    "gamma_probe",
    "bounded_lipschitz_distance",
    "delta_of_L",
    "equidistant_positions",
    "stripe_residual",
]


def scalar_force_G(x: float, p: ForceParams, quad_tol: float = 1e-12) -> float:
    """G(x) by adaptive quadrature of f_l over the strip cross-section.

    The integrand vanishes for z^2 >= cutoff^2 - x^2, so integration is
    restricted to the support, where f_l is smooth.
    """
    ax = abs(x)
    if ax >= p.cutoff:
        return 0.0
    zmax = np.sqrt(p.cutoff**2 - ax * ax)
    zmax = min(zmax, 0.5)
    val, _ = quad(
        lambda z: coeff_l(np.hypot(ax, z), p), 0.0, zmax,
        epsabs=quad_tol, epsrel=quad_tol, limit=200,
    )
    return float(x * 2.0 * val)


@dataclass(frozen=True)
class Potential1D:
    """Sampled G and W on a symmetric grid over [-1/2, 1/2]."""

    x: np.ndarray
    g: np.ndarray
    w: np.ndarray
    w_tail: float
    w_l1: float
    params: ForceParams
    quad_tol: float = 1e-12

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def w_at(self, x) -> np.ndarray:
        """W at arbitrary points: linear interpolation inside, tail outside."""
        ax = np.abs(np.asarray(x, dtype=float))
        half = (self.x.size + 1) // 2
        xp = self.x[half - 1:]
        return np.where(ax >= 0.5, self.w_tail, np.interp(ax, xp, self.w[half - 1:]))

    def g_at(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        half = (self.x.size + 1) // 2
        xp = self.x[half - 1:]
        inner = np.interp(ax, xp, self.g[half - 1:])
        return np.sign(x) * np.where(ax >= 0.5, 0.0, inner)


def build_potential(p: ForceParams, m: int = 1025, quad_tol: float = 1e-12) -> Potential1D:
    """Sample G, integrate to W, normalize sup W = 0, measure ||W||_L1.

    m is rounded up to an odd count so the grid is exactly symmetric
    (including the origin); G is computed on the nonnegative half and
    mirrored, making the stored arrays odd/even bitwise.
    """
    if m < 64:
        raise ValueError("potential grid needs at least 64 points")
    if m % 2 == 0:
        m += 1
    half = (m + 1) // 2
    xpos = np.linspace(0.0, 0.5, half)
    gpos = np.array([scalar_force_G(x, p, quad_tol) for x in xpos])
    # W(x) = int_x^{1/2} G dt + c on x >= 0, even extension, sup-normalized
    ig = cumulative_simpson(gpos, x=xpos, initial=0.0)
    wpos = ig[-1] - ig
    wpos -= wpos.max()
    w_l1 = 2.0 * float(simpson(np.abs(wpos), x=xpos))
    x = np.concatenate([-xpos[::-1][:-1], xpos])
    g = np.concatenate([-gpos[::-1][:-1], gpos])
    w = np.concatenate([wpos[::-1][:-1], wpos])
    return Potential1D(x=x, g=g, w=w, w_tail=float(wpos[-1]), w_l1=w_l1,
                       params=p, quad_tol=quad_tol)


@dataclass(frozen=True)
class Density1D:
    """Nonnegative unit-mass density on a uniform working grid."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.min() < 0:
            raise ValueError("density must be nonnegative")
        if abs(self.mass() - 1.0) > 1e-12:
            raise ValueError(f"density mass {self.mass()} is not 1")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def mass(self) -> float:
        return float(self.values.sum() * (self.x[1] - self.x[0]))


def working_grid(m: int, half_width: float = 2.0) -> np.ndarray:
    return np.linspace(-half_width, half_width, m)


def _kernel_offsets(pot: Potential1D, m: int, h: float) -> np.ndarray:
    return pot.w_at(np.arange(-(m - 1), m) * h)


def w_convolve(values: np.ndarray, kernel: np.ndarray, h: float) -> np.ndarray:
    """(W * rho)(x_i) = sum_j W((i-j) h) rho_j h, free-space."""
    return fftconvolve(values, kernel, mode="valid") * h


def energy(rho: Density1D, pot: Potential1D) -> float:
    """Interaction energy E = 1/2 int rho (W * rho)."""
    h = rho.h
    kernel = _kernel_offsets(pot, rho.values.size, h)
    conv = w_convolve(rho.values, kernel, h)
    return 0.5 * float((rho.values * conv).sum() * h)


def energy_delta(rho: Density1D, pot: Potential1D, delta: float) -> float:
    """Regularised energy E_delta = E + (delta/2) int rho^2."""
    return energy(rho, pot) + 0.5 * delta * float((rho.values**2).sum() * rho.h)


def _symmetric_bump(x: np.ndarray, width: float = 0.5) -> np.ndarray:
    v = np.maximum(0.0, 1.0 - (x / width) ** 2)
    return v / (v.sum() * (x[1] - x[0]))


def _bisect_level(conv: np.ndarray, delta: float, h: float, rho_max: float) -> float:
    """Level C with unit mass of (C - conv)_+ / delta; mass is nondecreasing in C."""
    lo = float(conv.min())
    hi = float(conv.max() + delta * rho_max + 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        mass = np.maximum(mid - conv, 0.0).sum() * h / delta
        if mass < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-18 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FixedPointResult:
    rho: Density1D
    level: float
    residual: float
    iterations: int


def stationary_fixed_point(
    delta: float,
    pot: Potential1D,
    m: int = 1024,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 50_000,
    half_width: float = 2.0,
) -> FixedPointResult:
    """Damped iteration of rho <- (C - W*rho)_+ / delta with mass-fixing C.

    Iterates are symmetrized each sweep (every operator involved preserves
    evenness, so this only removes roundoff drift).  Stops when the L1
    change drops below tol; the returned residual is the sup of
    |W*rho + delta rho - C| on the support.
    """
    if not 0.0 < delta < pot.w_l1:
        raise ValueError(
            f"delta must lie in (0, ||W||_L1 = {pot.w_l1:g}); no stationary "
            "state exists at or above the threshold"
        )
    x = working_grid(m, half_width)
    h = x[1] - x[0]
    kernel = _kernel_offsets(pot, m, h)
    rho = _symmetric_bump(x)
    level = 0.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        conv = w_convolve(rho, kernel, h)
        level = _bisect_level(conv, delta, h, rho.max())
        cand = np.maximum(level - conv, 0.0) / delta
        cand /= cand.sum() * h
        new = (1.0 - damping) * rho + damping * cand
        new = 0.5 * (new + new[::-1])
        change = np.abs(new - rho).sum() * h
        rho = new
        if rho[0] > 0.0 or rho[-1] > 0.0:
            raise RuntimeError(
                "support reached the working-interval boundary; enlarge half_width"
            )
        if change < tol:
            converged = True
            break
    if not converged:
        raise RuntimeError(f"fixed point not converged in {max_iter} iterations")
    conv = w_convolve(rho, kernel, h)
    support = rho > 1e-10
    residual = float(np.abs(conv + delta * rho - level)[support].max())
    return FixedPointResult(
        rho=Density1D(x=x, values=rho),
        level=level,
        residual=residual,
        iterations=it,
    )


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {v >= 0, sum v = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    k = np.nonzero(u * idx > (css - 1.0))[0][-1]
    tau = (css[k] - 1.0) / (k + 1.0)
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class MinimizeResult:
    rho: Density1D
    energies: np.ndarray
    iterations: int


def minimize_energy(
    delta: float,
    pot: Potential1D,
    m: int = 1024,
    tol: float = 1e-13,
    max_iter: int = 50_000,
    half_width: float = 2.0,
) -> MinimizeResult:
    """Projected gradient descent for E_delta on the discrete simplex.

    Works in the mass variables v = rho h; the step size backtracks until
    the energy decreases, so the recorded energy trace is monotone.
    """
    if not 0.0 < delta < pot.w_l1:
        raise ValueError(f"delta must lie in (0, ||W||_L1 = {pot.w_l1:g})")
    x = working_grid(m, half_width)
    h = x[1] - x[0]
    kernel = _kernel_offsets(pot, m, h)

    def e_delta(rho):
        conv = w_convolve(rho, kernel, h)
        return 0.5 * float((rho * conv).sum() * h) + 0.5 * delta * float((rho**2).sum() * h)

    # start from a box profile, distinct from the fixed-point iteration seed
    v = ((np.abs(x) <= 0.25) * 1.0)
    v /= v.sum()
    rho = v / h
    e_cur = e_delta(rho)
    energies = [e_cur]
    eta = h / (pot.w_l1 + delta)  # ~1/L for the quadratic part
    it = 0
    for it in range(1, max_iter + 1):
        conv = w_convolve(rho, kernel, h)
        grad = conv + delta * rho
        accepted = False
        for _ in range(60):
            v_new = _project_simplex(v - eta * grad)
            v_new = 0.5 * (v_new + v_new[::-1])
            rho_new = v_new / h
            e_new = e_delta(rho_new)
            if e_new <= e_cur:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break  # numerically at a minimum: no decreasing step exists
        change = np.abs(rho_new - rho).sum() * h
        v, rho = v_new, rho_new
        if e_new < e_cur:
            energies.append(e_new)
        e_cur = e_new
        eta *= 1.3
        if change < tol:
            break
    return MinimizeResult(
        rho=Density1D(x=x, values=rho),
        energies=np.array(energies),
        iterations=it,
    )


HEAT_KERNEL_BOUND = 1.0 / np.sqrt(4.0 * np.pi)


def mollify(rho: Density1D, delta: float) -> Density1D:
    """Convolve with the heat kernel phi_delta(x) = phi(x/sqrt(delta))/sqrt(delta),
    phi(x) = (4 pi)^{-1/2} exp(-x^2/4), renormalized to unit mass."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    h = rho.h
    s = np.sqrt(delta)
    radius = min(30.0 * s, rho.x[-1] - rho.x[0])
    k = max(1, int(np.ceil(radius / h)))
    off = np.arange(-k, k + 1) * h
    kernel = HEAT_KERNEL_BOUND / s * np.exp(-(off / s) ** 2 / 4.0)
    smooth = fftconvolve(rho.values, kernel, mode="same") * h
    smooth = np.maximum(smooth, 0.0)
    smooth /= smooth.sum() * h
    return Density1D(x=rho.x, values=smooth)


def bounded_lipschitz_distance(rho1: Density1D, rho2: Density1D) -> float:
    """Dudley distance sup{ int f d(mu - nu) : |f| <= 1, Lip(f) <= 1 },
    solved exactly as a linear program on the shared grid."""
    if rho1.x.shape != rho2.x.shape or not np.allclose(rho1.x, rho2.x):
        raise ValueError("densities must share a grid")
    h = rho1.h
    d = (rho1.values - rho2.values) * h
    m = d.size
    a = lil_matrix((2 * (m - 1), m))
    for i in range(m - 1):
        a[2 * i, i + 1] = 1.0
        a[2 * i, i] = -1.0
        a[2 * i + 1, i] = 1.0
        a[2 * i + 1, i + 1] = -1.0
    b = np.full(2 * (m - 1), h)
    res = linprog(-d, A_ub=a.tocsr(), b_ub=b, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


@dataclass(frozen=True)
class GammaReport:
    deltas: np.ndarray
    energies: np.ndarray
    bl_steps: np.ndarray  # distance between successive minimizers
    minimizers: list = field(default_factory=list, repr=False)


def gamma_probe(pot: Potential1D, delta_sequence, m: int = 1024,
                half_width: float = 2.0) -> GammaReport:
    """Minimizers and E_delta values along a decreasing delta sequence.

    The reported E values are nonincreasing down the sequence (the
    penalties are nested) and the bounded-Lipschitz steps shrink as the
    minimizers converge.  The fixed-point solver supplies the minimizer:
    the steady state is the global minimizer of E_delta.
    """
    deltas = np.asarray(list(delta_sequence), dtype=float)
    if deltas.size == 0 or np.any(deltas <= 0) or np.any(deltas >= pot.w_l1):
        raise ValueError("deltas must be positive, below ||W||_L1")
    if deltas.size > 1 and np.any(np.diff(deltas) >= 0):
        raise ValueError("delta sequence must be decreasing")
    minimizers = []
    energies = []
    for d in deltas:
        sol = stationary_fixed_point(d, pot, m=m, half_width=half_width)
        minimizers.append(sol.rho)
        energies.append(energy_delta(sol.rho, pot, d))
    bl = [
        bounded_lipschitz_distance(minimizers[i], minimizers[i - 1])
        for i in range(1, len(minimizers))
    ]
    return GammaReport(
        deltas=deltas,
        energies=np.array(energies),
        bl_steps=np.array(bl),
        minimizers=minimizers,
    )


def delta_of_L(L: float, pot: Potential1D, m_L: int = 400,
               tol: float = 1e-10, max_iter: int = 200_000) -> float:
    """Threshold diffusion for support [-L, L]: the top eigenvalue of the
    operator with kernel -(W(x-w) + W(x+w) - W(L-w) - W(L+w)) on [0, L].

    Discretized with trapezoid weights; the shifted power iteration keeps
    the dominant eigenvalue positive (the spectrum is real, and the sign
    flip matches the W <= 0 normalization: the steady-state relation reads
    -W_L[rho] = delta rho).
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if m_L < 3:
        raise ValueError("m_L must be at least 3")
    xg = np.linspace(0.0, L, m_L)
    tau = np.full(m_L, xg[1] - xg[0])
    tau[0] *= 0.5
    tau[-1] *= 0.5
    xc = xg[:, None]
    wc = xg[None, :]
    kern = pot.w_at(xc - wc) + pot.w_at(xc + wc) - pot.w_at(L - wc) - pot.w_at(L + wc)
    mat = -kern * tau[None, :]
    sigma = float(np.abs(mat).sum(axis=1).max())
    mat[np.diag_indices(m_L)] += sigma
    v = 1.0 - (xg / L) ** 2
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        rayleigh = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise RuntimeError("power iteration collapsed to zero")
        v = w / norm
        if abs(rayleigh - lam) <= tol * max(abs(rayleigh), 1e-300):
            return rayleigh - sigma
        lam = rayleigh
    raise RuntimeError(f"power iteration stagnated after {max_iter} iterations")


@dataclass(frozen=True)
class StripeConfig:
    """n vertical lines at strictly increasing positions inside the period."""

    positions: np.ndarray

    def __post_init__(self):
        p = self.positions
        if p.size == 0:
            raise ValueError("at least one stripe required")
        if np.any(p <= -0.5) or np.any(p >= 0.5):
            raise ValueError("positions must lie in (-1/2, 1/2)")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ValueError("positions must be strictly increasing")

    @property
    def n(self) -> int:
        return self.positions.size


def equidistant_positions(n: int) -> StripeConfig:
    """x_k = k/n - (n+1)/(2n), k = 1..n; zero mean."""
    if n < 1:
        raise ValueError("n must be at least 1")
    k = np.arange(1, n + 1)
    return StripeConfig(positions=k / n - (n + 1) / (2.0 * n))


def stripe_residual(config: StripeConfig, pot: Potential1D) -> np.ndarray:
    """residual_k = sum_{j != k} W'(d_per(x_k, x_j)) with W' = -G evaluated
    analytically via scalar_force_G and signed minimum-image differences."""
    p = config.positions
    res = np.zeros(config.n)
    for k in range(config.n):
        acc = 0.0
        for j in range(config.n):
            if j == k:
                continue
            d = p[k] - p[j]
            d -= np.round(d)
            acc -= scalar_force_G(d, pot.params, pot.quad_tol)
        res[k] = acc
    return res
