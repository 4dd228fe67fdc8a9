"""Fourier-mode decomposition on the rectangle and the 1D control estimate.

Functions on [0,1] are represented by their plain sine coefficients
(f = sum_m fhat_m sin(m pi x)); the y-direction uses the even sine family
e_k(y) = sqrt(2/a) sin(2 k pi y / a). The control-constant estimator probes
the mode equation (d^2/dx^2 - (z + (2 k pi / a)^2)) u_k = f_k with random
sources and resonant kernels and reports the observed supremum of
||u||^2 / (||f||_{H^-1}^2 + ||u|_omega||^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst, idst

from .errors import InvalidGeometry, ResonantMode


def sine_coefficients(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain sine coefficients from samples on the interior grid x_j = j/(M+1)."""
    m = values.shape[axis]
    return dst(values, type=1, axis=axis) / (m + 1)


def sine_samples(coeffs: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse of sine_coefficients."""
    m = coeffs.shape[axis]
    return idst(coeffs * (m + 1), type=1, axis=axis)


def l2_norm_sq(coeffs: np.ndarray, axis: int = -1, length: float = 1.0) -> np.ndarray:
    """Exact L2 norm squared of sum_m c_m sin(m pi x / length) on [0, length]."""
    return (np.abs(coeffs) ** 2).sum(axis=axis) * (length / 2.0)


def h_minus1_norm(f: np.ndarray, from_samples: bool = True) -> float:
    """Dual-norm surrogate (sum_m |fhat_m|^2 / (1 + m^2 pi^2))^(1/2) on [0,1]."""
    coeffs = sine_coefficients(np.asarray(f, dtype=float)) if from_samples else np.asarray(f)
    m = np.arange(1, coeffs.shape[-1] + 1)
    weights = 1.0 / (1.0 + (m * np.pi) ** 2)
    return float(np.sqrt((np.abs(coeffs) ** 2 * weights).sum()))


@dataclass(frozen=True)
class ModeStack:
    """Per-mode 1D coefficient functions u_k(x) for the even sine family in y."""

    a: float
    coefficients: np.ndarray       # shape (k_max, nx), u_k on the interior x grid

    @property
    def k_max(self) -> int:
        return self.coefficients.shape[0]

    def total_mass(self) -> float:
        """Sum over modes of ||u_k||^2 on [0,1]."""
        cf = sine_coefficients(self.coefficients, axis=1)
        return float(l2_norm_sq(cf, axis=1).sum())


def mode_split(u: np.ndarray, a: float) -> ModeStack:
    """Split u(x, y) on [0,1]x[0,a] into the even sine modes in y.

    u is sampled on the interior grid (ny, nx), indexed [j, i] with
    y_j = (j+1) a/(ny+1). Components outside the even sine family are
    projected away; reconstruct() returns exactly that projection.
    """
    u = np.asarray(u)
    ny = u.shape[0]
    c = sine_coefficients(u, axis=0)            # plain sin(m pi y / a) coefficients
    k_max = (ny + 1 - 1) // 2                   # even indices 2k present in the basis
    even = c[1::2, :][: k_max, :]               # m = 2, 4, ...
    return ModeStack(a=a, coefficients=np.sqrt(a / 2.0) * even)


def reconstruct(stack: ModeStack, ny: int) -> np.ndarray:
    """Rebuild the 2D grid function from its mode stack."""
    nx = stack.coefficients.shape[1]
    c = np.zeros((ny, nx))
    even = stack.coefficients / np.sqrt(stack.a / 2.0)
    c[1::2, :][: stack.k_max, :] = even
    return sine_samples(c, axis=0)


def mode_frequency_sq(k: int, a: float) -> float:
    """Squared y-frequency (2 k pi / a)^2 of mode k."""
    return (2.0 * k * np.pi / a) ** 2


def solve_mode(z: complex, k: int, a: float, f_k: np.ndarray,
               resonance_tol: float = 1e-8) -> np.ndarray:
    """Solve (d^2/dx^2 - (z + (2 k pi/a)^2)) u_k = f_k with u_k(0)=u_k(1)=0.

    f_k is sampled on the interior grid of [0,1]; the solve is diagonal in the
    sine basis and exact to roundoff. Raises ResonantMode when the shifted
    operator is singular at some sine frequency.
    """
    f_k = np.asarray(f_k)
    w = z + mode_frequency_sq(k, a)
    coeffs = sine_coefficients(f_k.astype(complex))
    m = np.arange(1, coeffs.shape[-1] + 1)
    denom = -(m * np.pi) ** 2 - w
    scale = max(1.0, abs(w))
    bad = np.abs(denom) <= resonance_tol * scale
    if bad.any():
        idx = int(m[bad][0])
        raise ResonantMode(f"mode (k={k}, z={z}) is resonant at sine index m={idx}", kernel_index=idx)
    u = sine_samples(coeffs / denom)
    return u.real if (np.isrealobj(f_k) and np.isreal(z)) else u


def window_l2_sq(values: np.ndarray, x0: float, x1: float) -> float:
    """Trapezoid integral of values^2 over (x0, x1) with interpolated endpoints.

    values live on the interior grid x_j = j/(M+1) of [0,1]; the function is
    extended by its Dirichlet zeros at 0 and 1.
    """
    m = values.shape[-1]
    xs = np.arange(0, m + 2) / (m + 1)
    v = np.zeros(m + 2)
    v[1:-1] = values
    x0 = max(0.0, x0)
    x1 = min(1.0, x1)
    if x1 <= x0:
        raise InvalidGeometry("window must have positive length")
    grid_pts = xs[(xs > x0) & (xs < x1)]
    pts = np.concatenate(([x0], grid_pts, [x1]))
    vals = np.interp(pts, xs, v)
    return float(np.trapezoid(vals ** 2, pts))


def sine_window_mass(m: int, x0: float, x1: float) -> float:
    """Analytic integral of sin(m pi x)^2 over (x0, x1)."""
    def anti(x):
        return x / 2.0 - np.sin(2.0 * m * np.pi * x) / (4.0 * m * np.pi)
    return anti(x1) - anti(x0)


@dataclass
class ControlEstimate:
    """Observed supremum of the per-mode control ratio."""

    omega_x: tuple[float, float]
    k_max: int
    z_samples: list[float]
    C_empirical: float
    argmax: tuple[int, float, str]           # (k, z, probe kind)
    per_k_max: dict[int, float] = field(default_factory=dict)
    rows: list[tuple[int, float, float, str]] = field(default_factory=list)

    def max_over_k_range(self, k_lo: int, k_hi: int) -> float:
        vals = [v for k, v in self.per_k_max.items() if k_lo <= k <= k_hi]
        return max(vals) if vals else 0.0


def control_ratio(u_vals: np.ndarray, f_vals: np.ndarray | None,
                  omega_x: tuple[float, float]) -> float:
    """||u||^2 / (||f||_{H^-1}^2 + ||u|_omega||^2) for interior-grid samples."""
    u_coeffs = sine_coefficients(np.real(u_vals))
    num = float(l2_norm_sq(u_coeffs))
    fn = 0.0 if f_vals is None else h_minus1_norm(np.real(f_vals)) ** 2
    den = fn + window_l2_sq(np.real(u_vals), *omega_x)
    return num / den


def estimate_control_constant(omega_x: tuple[float, float], k_max: int,
                              z_grid: np.ndarray | None = None,
                              z_max: float = 1e4, a: float = 1.0,
                              n_random: int = 4, grid_size: int = 511,
                              seed: int = 20240920) -> ControlEstimate:
    """Empirically maximize the control ratio over modes, shifts and sources.

    For each k <= k_max the probe set contains: one random source per entry of
    z_grid, n_random fully random (z, f) draws, and the resonant kernels
    sin(m pi x) for every resonance with |z| <= z_max (there the ratio is
    evaluated on the kernel itself with f = 0, using the analytic window
    integral).
    """
    x0, x1 = omega_x
    if not (0.0 <= x0 < x1 <= 1.0):
        raise InvalidGeometry("omega_x must be a nonempty open subinterval of [0,1]")
    if z_grid is None:
        mags = np.logspace(0.0, np.log10(max(z_max, 10.0)), 13)
        z_grid = np.unique(np.concatenate((-mags, [0.0], mags)))
    rng = np.random.default_rng(seed)
    m_idx = np.arange(1, grid_size + 1)

    best = (0.0, (0, 0.0, "none"))
    per_k: dict[int, float] = {}
    rows: list[tuple[int, float, float, str]] = []

    def consider(k: int, z: float, ratio: float, kind: str):
        nonlocal best
        rows.append((k, z, ratio, kind))
        if ratio > per_k.get(k, 0.0):
            per_k[k] = ratio
        if ratio > best[0]:
            best = (ratio, (k, z, kind))

    for k in range(1, k_max + 1):
        shift = mode_frequency_sq(k, a)
        # resonant kernels reachable with |z| <= z_max
        m = 1
        while (m * np.pi) ** 2 + shift <= z_max:
            z_res = -((m * np.pi) ** 2) - shift
            ratio = 0.5 / sine_window_mass(m, x0, x1)
            consider(k, z_res, ratio, f"resonant m={m}")
            m += 1
        z_list = list(np.asarray(z_grid, dtype=float))
        z_list += list(rng.uniform(-z_max, z_max, size=n_random))
        for z in z_list:
            fhat = rng.standard_normal(grid_size) / (1.0 + m_idx.astype(float))
            f_vals = sine_samples(fhat)
            try:
                u_vals = solve_mode(z, k, a, f_vals)
            except ResonantMode:
                continue
            consider(k, float(z), control_ratio(u_vals, f_vals, omega_x), "random")

    return ControlEstimate(omega_x=omega_x, k_max=k_max,
                           z_samples=[float(z) for z in np.asarray(z_grid)],
                           C_empirical=best[0], argmax=best[1],
                           per_k_max=per_k, rows=rows)
