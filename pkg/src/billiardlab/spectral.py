"""Discrete Laplacian assembly and windowed eigensolves.

The operator is the 2nd-order 5-point stencil on the uniform grid; Dirichlet
features (outer walls, obstacle, slit) pin nodes to zero, Neumann features use
mirror ghost nodes, and torus boundaries wrap. Eigenpairs near a spectral
target come from shift-invert Lanczos with a deterministic start vector, plus
an inertia (Sturm) count certifying that no eigenvalue in the returned window
was missed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, EmptyRegion, InvalidGeometry, ShiftBreakdown
from .geometry import Grid, INTERIOR, OBSTACLE, OUTER, SLIT

_SPECTRUM_MAGIC = b"BLSP"
_BC_CODES = {"dirichlet": 0, "neumann": 1, "periodic": 2}


@dataclass(frozen=True)
class SparseOperator:
    """Assembled -Laplacian acting on the grid's interior nodes."""

    matrix: sp.csr_matrix
    grid: Grid
    index_map: np.ndarray          # node -> unknown index, -1 for pinned nodes

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def restrict(self, grid_values: np.ndarray) -> np.ndarray:
        return grid_values[self.index_map >= 0]

    def embed(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.index_map.shape, dtype=vec.dtype)
        out[self.index_map >= 0] = vec
        return out

    def apply_grid(self, grid_values: np.ndarray) -> np.ndarray:
        return self.embed(self.matrix @ self.restrict(grid_values))


@dataclass(frozen=True)
class SpectralWindow:
    target: float
    count: int

    def __post_init__(self):
        if self.target <= 0 or self.count < 1:
            raise InvalidGeometry("spectral window needs target > 0 and count >= 1")


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue of -Laplacian with its L2-normalized grid eigenvector."""

    lam: float
    vector: np.ndarray             # full grid array, zeros at pinned nodes
    residual: float
    cluster: int = 0

    @property
    def h(self) -> float:
        return self.lam ** -0.5


def assemble_laplacian(grid: Grid) -> SparseOperator:
    """Assemble the symmetric 5-point -Laplacian on the grid's interior nodes."""
    cls = grid.node_class
    ny, nx = cls.shape
    dx2 = 1.0 / grid.dx ** 2
    dy2 = 1.0 / grid.dy ** 2
    periodic = grid.periodic
    bc = grid.spec.bc
    obstacle_neumann = bc.get("obstacle") == "neumann"
    outer_neumann = bc.get("outer") == "neumann"

    mask = cls == INTERIOR
    n_unk = int(mask.sum())
    index_map = -np.ones(cls.shape, dtype=np.int64)
    index_map[mask] = np.arange(n_unk)

    jj, ii = np.nonzero(mask)
    me = index_map[jj, ii]
    diag = np.full(n_unk, 2.0 * (dx2 + dy2))
    rows = [me]
    cols = [me]
    vals = [None]  # diagonal filled in last

    for dj, di, w in ((0, 1, dx2), (0, -1, dx2), (1, 0, dy2), (-1, 0, dy2)):
        nj = jj + dj
        ni = ii + di
        if periodic:
            nj %= ny
            ni %= nx
            valid = np.ones(nj.shape, dtype=bool)
        else:
            valid = (nj >= 0) & (nj < ny) & (ni >= 0) & (ni < nx)
        nbr_cls = np.full(nj.shape, OUTER, dtype=np.int8)
        nbr_cls[valid] = cls[nj[valid], ni[valid]]

        coupled = valid & (nbr_cls == INTERIOR)
        nb = index_map[nj[coupled], ni[coupled]]
        rows.append(me[coupled])
        cols.append(nb)
        vals.append(np.full(nb.shape, -w))

        # Neumann mirror ghost: drop the coupling and remove its diagonal weight
        if obstacle_neumann:
            refl = valid & (nbr_cls == OBSTACLE)
            np.subtract.at(diag, me[refl], w)
        if outer_neumann and not periodic:
            refl = valid & (nbr_cls == OUTER)
            np.subtract.at(diag, me[refl], w)
        # Dirichlet pinned neighbors (OUTER, OBSTACLE, SLIT) contribute zero.

    vals[0] = diag
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unk, n_unk),
    )
    A.sum_duplicates()
    return SparseOperator(matrix=A, grid=grid, index_map=index_map)


def count_eigenvalues_below(op: SparseOperator, sigma: float) -> int:
    """Inertia of (A - sigma I) via an unpivoted symmetric-mode factorization."""
    n = op.dimension
    shifted = sp.csc_matrix(op.matrix - sigma * sp.identity(n, format="csr"))
    lu = spla.splu(shifted, diag_pivot_thresh=0.0, permc_spec="MMD_AT_PLUS_A",
                   options=dict(SymmetricMode=True))
    return int((lu.U.diagonal() < 0).sum())


_STURM_NODE_CAP = 300 * 300


def eigs_window(op: SparseOperator, window: SpectralWindow, tol: float = 1e-8,
                cluster_gap: float = 1e-6) -> list[EigenPair]:
    """Eigenpairs nearest window.target, sorted by |lam - target|.

    Vectors are L2-normalized with respect to the grid measure dx*dy and come
    back as full grid arrays (zeros on pinned nodes). Degenerate eigenvalues
    are returned as an orthonormal cluster basis and share a cluster tag.
    When a direct factorization is affordable the returned window is certified
    complete by a Sturm count; interior misses raise ConvergenceFailure.
    """
    n = op.dimension
    k = min(window.count, n - 1)
    rng = np.random.default_rng(0x5EED)
    v0 = rng.standard_normal(n)

    sigma = float(window.target)
    lam = vecs = None
    for attempt in range(2):
        try:
            lam, vecs = spla.eigsh(op.matrix, k=k, sigma=sigma, which="LM", v0=v0)
            break
        except (RuntimeError, spla.ArpackError) as exc:  # singular shift or breakdown
            if attempt == 1:
                raise ShiftBreakdown(f"shift-invert failed twice at sigma={sigma}: {exc}") from exc
            sigma *= 1.0 + 1e-5
            sigma += 1e-9
    if lam is None:
        raise ConvergenceFailure("eigensolver returned nothing")

    order = np.argsort(np.abs(lam - window.target), kind="stable")
    lam = lam[order]
    vecs = vecs[:, order]

    if n <= _STURM_NODE_CAP:
        _certify_window(op, np.sort(lam), window)

    cell = op.grid.dx * op.grid.dy
    pairs: list[EigenPair] = []
    lam_sorted_idx = np.argsort(lam, kind="stable")
    cluster_of = np.zeros(len(lam), dtype=int)
    cid = 0
    prev = None
    for rank, idx in enumerate(lam_sorted_idx):
        if prev is not None and abs(lam[idx] - prev) > cluster_gap * max(1.0, window.target):
            cid += 1
        cluster_of[idx] = cid
        prev = lam[idx]

    for q in range(len(lam)):
        v = vecs[:, q]
        res = float(np.linalg.norm(op.matrix @ v - lam[q] * v) / np.linalg.norm(v))
        if res > max(tol, 1e-12 * max(1.0, lam[q])):
            raise ConvergenceFailure(f"residual {res:.3e} exceeds tol {tol:.1e} at lam={lam[q]:.6g}")
        grid_vec = op.embed(v / (np.linalg.norm(v) * np.sqrt(cell)))
        pairs.append(EigenPair(lam=float(lam[q]), vector=grid_vec, residual=res,
                               cluster=int(cluster_of[q])))
    return pairs


def _certify_window(op: SparseOperator, lam_sorted: np.ndarray, window: SpectralWindow) -> None:
    scale = max(1.0, float(np.abs(lam_sorted).max()))
    delta = 1e-8 * scale
    lo = lam_sorted[0] - delta
    hi = lam_sorted[-1] + delta
    total = count_eigenvalues_below(op, hi) - count_eigenvalues_below(op, lo)
    if total == len(lam_sorted):
        return
    # An edge cluster may be partially returned; recount strictly inside the
    # hull with the extreme clusters excluded.
    gap = 1e-6 * max(1.0, window.target)
    inner_lo = lam_sorted[0] + gap
    inner_hi = lam_sorted[-1] - gap
    inside = int(((lam_sorted > inner_lo) & (lam_sorted < inner_hi)).sum())
    counted = count_eigenvalues_below(op, inner_hi) - count_eigenvalues_below(op, inner_lo)
    if counted != inside:
        raise ConvergenceFailure(
            f"Sturm count found {counted} eigenvalues strictly inside the window "
            f"but the solver returned {inside}")


def mass_in_region(pair: EigenPair, mask: np.ndarray, grid: Grid) -> float:
    """L2 mass of the eigenvector carried by the masked nodes."""
    if not mask.any():
        raise EmptyRegion("mass_in_region called with an empty mask")
    cell = grid.dx * grid.dy
    return float((pair.vector[mask] ** 2).sum() * cell)


# --- persistence -------------------------------------------------------------


def save_spectrum(path: str | Path, grid: Grid, pairs: list[EigenPair],
                  tol: float | None = None) -> None:
    """Binary container (little-endian f64 vectors) plus a JSON sidecar."""
    path = Path(path)
    ny, nx = grid.node_class.shape
    bc_code = _BC_CODES[grid.spec.bc.get("outer", "dirichlet")]
    with open(path, "wb") as f:
        f.write(_SPECTRUM_MAGIC)
        f.write(struct.pack("<IIIII", 1, nx, ny, bc_code, len(pairs)))
        f.write(np.array([p.lam for p in pairs], dtype="<f8").tobytes())
        for p in pairs:
            f.write(np.ascontiguousarray(p.vector, dtype="<f8").tobytes())
    sidecar = {
        "grid": {"nx": grid.nx, "ny": grid.ny, "dx": grid.dx, "dy": grid.dy,
                 "shape": [ny, nx]},
        "bc": grid.spec.bc,
        "kind": grid.spec.kind,
        "count": len(pairs),
        "lambdas": [p.lam for p in pairs],
        "residuals": [p.residual for p in pairs],
        "clusters": [p.cluster for p in pairs],
        "tol": tol,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_spectrum(path: str | Path) -> tuple[dict, list[EigenPair]]:
    """Load a spectrum container; returns (sidecar metadata, pairs)."""
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _SPECTRUM_MAGIC:
            raise ValueError(f"{path} is not a spectrum container")
        _, nx, ny, _, count = struct.unpack("<IIIII", f.read(20))
        lams = np.frombuffer(f.read(8 * count), dtype="<f8")
        shape = tuple(meta["grid"]["shape"])
        pairs = []
        per = shape[0] * shape[1]
        for q in range(count):
            vec = np.frombuffer(f.read(8 * per), dtype="<f8").reshape(shape).copy()
            pairs.append(EigenPair(lam=float(lams[q]), vector=vec,
                                   residual=float(meta["residuals"][q]),
                                   cluster=int(meta["clusters"][q])))
    return meta, pairs
