"""Discrete semiclassical quantization and Husimi phase-space measures on tori.

Quantization is left (Kohn-Nirenberg): transform to frequency space, multiply
by the symbol at the scaled grid frequencies, transform back, then multiply by
the spatial factor. Exact for x-only and xi-only symbols. The Husimi measure
is the squared short-time Fourier transform against a periodized Gaussian of
width sqrt(h); sampling every frequency with positions on a sublattice keeps
the total mass equal to ||u||^2 to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GammaNotOnGrid, PhaseGridTooCoarse


# --- symbols -----------------------------------------------------------------


@dataclass
class SymbolFn:
    """Separable symbol term a(x, xi) = f(x) * g(xi) bound to a torus grid.

    x_part holds f sampled on the (ny, nx) grid (None means f = 1), xi_part is
    a callable g(XI1, XI2) (None means g = 1). x_grad, when present, holds the
    sampled gradient of f and enables Poisson brackets with |xi|^2.
    """

    x_part: np.ndarray | None = None
    xi_part: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    x_grad: tuple[np.ndarray, np.ndarray] | None = None
    periodic_in_x: bool = True
    compact_in_xi: bool = False
    label: str = ""

    def terms(self) -> list["SymbolFn"]:
        return [self]


@dataclass
class SymbolSum:
    """Sum of separable symbol terms."""

    parts: list[SymbolFn]
    label: str = ""

    def terms(self) -> list[SymbolFn]:
        return list(self.parts)


Symbol = SymbolFn | SymbolSum


def smooth_bump(t: np.ndarray) -> np.ndarray:
    """C-infinity bump supported on |t| < 1, equal to 1 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m] ** 2))
    return out


def smooth_bump_d(t: np.ndarray) -> np.ndarray:
    """Derivative of smooth_bump."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    tm = t[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - tm ** 2)) * (-2.0 * tm / (1.0 - tm ** 2) ** 2)
    return out


def grid_coords(shape: tuple[int, int], torus: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    ny, nx = shape
    a, b = torus
    return (np.arange(nx) * (a / nx))[None, :], (np.arange(ny) * (b / ny))[:, None]


def torus_diff(v: np.ndarray, c: float, period: float) -> np.ndarray:
    return (v - c + period / 2.0) % period - period / 2.0


def radial_bump_x(shape: tuple[int, int], torus: tuple[float, float],
                  center: tuple[float, float], radius: float,
                  xi_part: Callable | None = None, label: str = "") -> SymbolFn:
    """Bump in x around a torus point, with analytic gradient, times g(xi)."""
    X, Y = grid_coords(shape, torus)
    a, b = torus
    dxv = torus_diff(X, center[0], a)
    dyv = torus_diff(Y, center[1], b)
    r = np.hypot(dxv, dyv)
    f = smooth_bump(r / radius)
    fd = smooth_bump_d(r / radius)
    rr = np.maximum(r, 1e-300)
    gx = fd * dxv / (rr * radius)
    gy = fd * dyv / (rr * radius)
    f, gx, gy = np.broadcast_arrays(f, gx, gy)
    return SymbolFn(x_part=f.copy(), xi_part=xi_part, x_grad=(gx.copy(), gy.copy()),
                    compact_in_xi=xi_part is not None, label=label)


def shell_bump_xi(width: float = 0.6, center: float = 1.0) -> Callable:
    """Radial bump g(xi) = bump((|xi| - center)/width)."""
    def g(XI1, XI2):
        return smooth_bump((np.hypot(XI1, XI2) - center) / width)
    return g


def ball_bump_xi(center: tuple[float, float], radius: float) -> Callable:
    def g(XI1, XI2):
        return smooth_bump(np.hypot(XI1 - center[0], XI2 - center[1]) / radius)
    return g


def poisson_bracket_with_p(sym: SymbolFn) -> SymbolSum:
    """{|xi|^2, a} = 2 xi . grad_x a for a separable symbol with gradient data."""
    if sym.x_grad is None:
        raise ValueError("symbol has no gradient data for the bracket")
    g = sym.xi_part
    gx, gy = sym.x_grad

    def g1(XI1, XI2):
        base = 2.0 * XI1
        return base * g(XI1, XI2) if g is not None else base

    def g2(XI1, XI2):
        base = 2.0 * XI2
        return base * g(XI1, XI2) if g is not None else base

    return SymbolSum(parts=[
        SymbolFn(x_part=gx, xi_part=g1, compact_in_xi=sym.compact_in_xi),
        SymbolFn(x_part=gy, xi_part=g2, compact_in_xi=sym.compact_in_xi),
    ], label=f"{{p, {sym.label}}}")


# --- quantization ------------------------------------------------------------


def grid_frequencies(shape: tuple[int, int], torus: tuple[float, float], h: float):
    """Scaled frequencies XI1, XI2 of the discrete Fourier modes."""
    ny, nx = shape
    a, b = torus
    kx = np.fft.fftfreq(nx, d=1.0 / nx)
    ky = np.fft.fftfreq(ny, d=1.0 / ny)
    return 2.0 * np.pi * h * (kx / a)[None, :], 2.0 * np.pi * h * (ky / b)[:, None]


def quantize_apply(sym: Symbol, h: float, u: np.ndarray,
                   torus: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    """Apply the left-quantized operator of a separable symbol to u."""
    XI1, XI2 = grid_frequencies(u.shape, torus, h)
    uh = np.fft.fft2(u)
    out = np.zeros(u.shape, dtype=complex)
    for term in sym.terms():
        v = np.fft.ifft2(uh * term.xi_part(XI1, XI2)) if term.xi_part is not None \
            else np.fft.ifft2(uh)
        out += v if term.x_part is None else term.x_part * v
    return out


def weyl_apply(sym: SymbolFn, h: float, u: np.ndarray,
               torus: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    """Symmetrized (Weyl-like) quantization of a product symbol; differs from
    the left quantization by O(h) on smooth symbols."""
    XI1, XI2 = grid_frequencies(u.shape, torus, h)
    g = sym.xi_part
    f = sym.x_part

    def mult(v):
        return np.fft.ifft2(np.fft.fft2(v) * g(XI1, XI2)) if g is not None else v

    fu = u if f is None else f * u
    return 0.5 * (mult(fu) + (mult(u) if f is None else f * np.asarray(mult(u))))


def operator_pairing(sym: Symbol, h: float, u: np.ndarray,
                     torus: tuple[float, float] = (1.0, 1.0)) -> complex:
    """<Op(a) u, u> for an l2-normalized grid vector u."""
    w = quantize_apply(sym, h, u, torus)
    return complex(np.vdot(u, w) / np.vdot(u, u))


def translation_commutator(sym: Symbol, h: float, gamma: tuple[float, float],
                           probes: Sequence[np.ndarray],
                           torus: tuple[float, float] = (1.0, 1.0)) -> float:
    """max over probes of ||[Op(a), T_gamma] u|| / ||u|| for a lattice shift."""
    ny, nx = probes[0].shape
    a, b = torus
    sx = gamma[0] / (a / nx)
    sy = gamma[1] / (b / ny)
    ix, jy = round(sx), round(sy)
    if abs(sx - ix) > 1e-9 or abs(sy - jy) > 1e-9:
        raise GammaNotOnGrid(f"gamma {gamma} is not a whole number of grid cells")

    worst = 0.0
    for u in probes:
        tu = np.roll(u, (jy, ix), axis=(0, 1))
        atu = quantize_apply(sym, h, tu, torus)
        tau = np.roll(quantize_apply(sym, h, u, torus), (jy, ix), axis=(0, 1))
        worst = max(worst, float(np.linalg.norm(atu - tau) / np.linalg.norm(u)))
    return worst


# --- Husimi measures ----------------------------------------------------------


@dataclass
class PhaseMeasure:
    """Nonnegative phase-space weights from coherent-state overlaps.

    weights[py, px, jy, jx] is the mass at position (x_pos[px], y_pos[py]) and
    frequency (xi1[jx], xi2[jy]); frequencies with any |component| above the
    stored window are lumped into overflow per position (they are far outside
    the unit shell for every test this package runs).
    """

    h: float
    torus: tuple[float, float]
    x_pos: np.ndarray
    y_pos: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    weights: np.ndarray
    overflow: np.ndarray
    stride: int
    source_shape: tuple[int, int]

    def total_mass(self) -> float:
        return float(self.weights.sum() + self.overflow.sum())

    def xi_mass(self, predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
                pos_mask: np.ndarray | None = None,
                overflow_counts: bool = False) -> float:
        """Mass where predicate(XI1, XI2) holds, optionally within a position mask.

        pos_mask is a boolean array on the full source grid; it is sampled at
        the measure's position sublattice. overflow_counts adds the overflow
        mass (frequencies outside the stored window) to the selection.
        """
        sel = predicate(self.xi1[None, :], self.xi2[:, None])
        w = self.weights[..., sel].sum(axis=-1)
        if overflow_counts:
            w = w + self.overflow
        if pos_mask is not None:
            sub = pos_mask[:: self.stride, :: self.stride]
            sub = sub[: w.shape[0], : w.shape[1]]
            w = w[sub]
        return float(w.sum())

    def shell_outside_mass(self, band: float) -> float:
        """Mass at frequencies with | |xi| - 1 | > band."""
        return self.xi_mass(lambda a, b: np.abs(np.hypot(a, b) - 1.0) > band,
                            overflow_counts=True)

    def direction_tube_mass(self, direction: tuple[float, float], delta: float,
                            pos_mask: np.ndarray | None = None) -> float:
        """Mass with xi/|xi| within delta of +-direction, inside pos_mask."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)

        def pred(XI1, XI2):
            r = np.hypot(XI1, XI2)
            with np.errstate(invalid="ignore", divide="ignore"):
                ox = np.where(r > 0, XI1 / r, np.inf)
                oy = np.where(r > 0, XI2 / r, np.inf)
            dist = np.minimum(np.hypot(ox - d[0], oy - d[1]),
                              np.hypot(ox + d[0], oy + d[1]))
            return dist < delta

        return self.xi_mass(pred, pos_mask=pos_mask)

    def position_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=(2, 3)) + self.overflow


def husimi(u: np.ndarray, h: float, torus: tuple[float, float] = (1.0, 1.0),
           stride: int = 8, width_scale: float = 1.0, xi_cap: float = 2.5) -> PhaseMeasure:
    """Husimi measure of an l2-normalized grid vector via a Gaussian STFT.

    The window is the periodized Gaussian exp(-|x|^2 / (2 w^2)) with
    w = width_scale * sqrt(h); positions are sampled on the stride-sublattice,
    frequencies densely. Total mass equals sum(|u|^2) up to the (checked)
    periodization ripple.
    """
    ny, nx = u.shape
    a, b = torus
    dx = a / nx
    dy = b / ny
    w = width_scale * np.sqrt(h)
    if w / max(dx, dy) < 8.0:
        raise PhaseGridTooCoarse(
            f"coherent width {w:.4g} spans fewer than 8 grid cells (dx={dx:.4g})")
    stride = max(1, min(stride, int(w / max(dx, dy) / 2)))

    def periodized_gauss(n, step, period):
        t = torus_diff(np.arange(n) * step, 0.0, period)
        return sum(np.exp(-((t + s * period) ** 2) / (2 * w * w)) for s in (-1.0, 0.0, 1.0))

    g1x = periodized_gauss(nx, dx, a)
    g1y = periodized_gauss(ny, dy, b)
    G0 = g1y[:, None] * g1x[None, :]
    g2sum = float((G0 ** 2).sum())
    npx = nx // stride
    npy = ny // stride
    norm = (nx * ny) * (npx * npy / (nx * ny)) * g2sum

    kx = np.fft.fftfreq(nx, d=1.0 / nx)
    ky = np.fft.fftfreq(ny, d=1.0 / ny)
    xi1_all = 2.0 * np.pi * h * kx / a
    xi2_all = 2.0 * np.pi * h * ky / b
    selx = np.abs(xi1_all) <= xi_cap
    sely = np.abs(xi2_all) <= xi_cap
    ox = np.argsort(xi1_all[selx])
    oy = np.argsort(xi2_all[sely])

    weights = np.empty((npy, npx, int(sely.sum()), int(selx.sum())))
    overflow = np.empty((npy, npx))
    uc = u.astype(complex, copy=False)
    for py in range(npy):
        Gy = np.roll(G0, py * stride, axis=0)
        stackw = np.stack([np.roll(Gy, px * stride, axis=1) for px in range(npx)])
        V = np.fft.fft2(uc[None, :, :] * stackw)
        P = (V.real ** 2 + V.imag ** 2) / norm
        inwin = P[:, sely][:, :, selx]
        weights[py] = inwin[:, oy][:, :, ox]
        overflow[py] = P.sum(axis=(1, 2)) - inwin.sum(axis=(1, 2))

    return PhaseMeasure(h=h, torus=(a, b), x_pos=np.arange(npx) * stride * dx,
                        y_pos=np.arange(npy) * stride * dy,
                        xi1=np.sort(xi1_all[selx]), xi2=np.sort(xi2_all[sely]),
                        weights=weights, overflow=overflow, stride=stride,
                        source_shape=(ny, nx))


def sigma_support_test(pm: PhaseMeasure, tol_band: float = 0.2) -> float:
    """Husimi mass outside the band | |xi| - 1 | <= tol_band."""
    return pm.shell_outside_mass(tol_band)


def flow_invariance_test(u: np.ndarray, h: float, sym: SymbolFn,
                         torus: tuple[float, float] = (1.0, 1.0)) -> float:
    """|<Op({p, a}) u, u>| for the flat-metric bracket {p, a} = 2 xi . grad_x a."""
    bracket = poisson_bracket_with_p(sym)
    return abs(operator_pairing(bracket, h, u, torus))


def defect_sequence(pairs_with_h: Sequence[tuple[float, np.ndarray]], sym: Symbol,
                    torus: tuple[float, float] = (1.0, 1.0)) -> list[tuple[float, complex]]:
    """Pairings <Op(a) u(h), u(h)> along an eigenfunction ladder.

    pairs_with_h holds (h, grid vector) sorted by decreasing h; convergence or
    oscillation of the output is for the caller to judge.
    """
    out = []
    for h, u in pairs_with_h:
        out.append((h, operator_pairing(sym, h, u, torus)))
    return out
