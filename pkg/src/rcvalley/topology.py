"""Reservoir network generation and spectral-radius scaling.

Three topologies are supported: directed Erdos-Renyi, undirected Erdos-Renyi
and undirected Watts-Strogatz small-world. Edge weights are i.i.d. uniform on
[-1, 1] and the weighted matrix is rescaled so that its largest eigenvalue
magnitude equals a target value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs, eigsh

from .errors import SpectralRadiusError, TopologyError

# At or below this size the spectral radius comes from a dense eigensolver.
DENSE_EIG_MAX_N = 512


class TopologyKind(str, enum.Enum):
    DIRECTED_RANDOM = "directed"
    UNDIRECTED_RANDOM = "undirected"
    SMALL_WORLD = "small_world"

    @property
    def directed(self) -> bool:
        return self is TopologyKind.DIRECTED_RANDOM


@dataclass(frozen=True)
class TopologySpec:
    kind: TopologyKind
    n: int
    avg_degree: float
    rewire_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TopologyKind(self.kind))
        if self.n < 1:
            raise TopologyError(f"n must be >= 1, got {self.n}")
        if self.avg_degree < 0:
            raise TopologyError(f"avg_degree must be >= 0, got {self.avg_degree}")
        if self.n < self.avg_degree + 1:
            raise TopologyError(
                f"cannot realize mean degree {self.avg_degree} with {self.n} nodes"
            )
        if self.kind is TopologyKind.SMALL_WORLD:
            if self.avg_degree != int(self.avg_degree) or int(self.avg_degree) % 2:
                raise TopologyError("small-world degree must be an even integer")
            if not 0.0 <= self.rewire_prob <= 1.0:
                raise TopologyError("rewire_prob must lie in [0, 1]")


@dataclass(frozen=True)
class EdgeSet:
    """Unweighted edges. Undirected edges are stored once with row < col."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    directed: bool

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class ReservoirNetwork:
    weights: sp.csr_matrix
    spectral_radius: float
    spec: TopologySpec | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def _pair_probability(spec: TopologySpec) -> float:
    if spec.n < 2:
        return 0.0
    return spec.avg_degree / (spec.n - 1)


def _triu_pair(q: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map row-major indices of the strict upper triangle back to (i, j)."""
    q = q.astype(np.int64)
    i = (n - 2 - np.floor(np.sqrt(-8.0 * q + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5)).astype(np.int64)

    def row_start(r):
        return r * (2 * n - r - 1) // 2

    # float rounding can put i one row off
    i = np.where(q < row_start(i), i - 1, i)
    i = np.where(q >= row_start(i + 1), i + 1, i)
    j = q - row_start(i) + i + 1
    return i, j


def _random_pairs(spec: TopologySpec, rng: np.random.Generator, directed: bool):
    n = spec.n
    p = _pair_probability(spec)
    total = n * (n - 1) if directed else n * (n - 1) // 2
    if total == 0 or p == 0.0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    # A binomial count followed by a uniform subset is the same law as
    # independent Bernoulli(p) draws on every pair.
    m = int(rng.binomial(total, min(p, 1.0)))
    q = np.sort(rng.choice(total, size=m, replace=False))
    if directed:
        i = q // (n - 1)
        c = q % (n - 1)
        j = c + (c >= i)
        return i, j
    return _triu_pair(q, n)


def _small_world_pairs(spec: TopologySpec, rng: np.random.Generator):
    n = spec.n
    half = int(spec.avg_degree) // 2
    neighbors = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, half + 1):
            v = (u + j) % n
            neighbors[u].add(v)
            neighbors[v].add(u)
    # Watts-Strogatz: sweep lattice distance first, then nodes
    for j in range(1, half + 1):
        for u in range(n):
            v = (u + j) % n
            if v not in neighbors[u] or rng.random() >= spec.rewire_prob:
                continue
            if len(neighbors[u]) >= n - 1:
                continue
            candidates = np.setdiff1d(
                np.arange(n), np.fromiter(neighbors[u] | {u}, dtype=np.int64)
            )
            w = int(candidates[rng.integers(len(candidates))])
            neighbors[u].discard(v)
            neighbors[v].discard(u)
            neighbors[u].add(w)
            neighbors[w].add(u)
    pairs = sorted((u, v) for u in range(n) for v in neighbors[u] if u < v)
    if not pairs:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    arr = np.array(pairs, dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def generate_topology(spec: TopologySpec) -> EdgeSet:
    """Draw the unweighted edge set described by ``spec``.

    Directed: every ordered pair (i, j), i != j, is present independently with
    probability k / (n - 1). Undirected random: same, per unordered pair.
    Small-world: ring lattice of degree k rewired with ``rewire_prob``.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind is TopologyKind.DIRECTED_RANDOM:
        rows, cols = _random_pairs(spec, rng, directed=True)
    elif spec.kind is TopologyKind.UNDIRECTED_RANDOM:
        rows, cols = _random_pairs(spec, rng, directed=False)
    else:
        rows, cols = _small_world_pairs(spec, rng)
    return EdgeSet(spec.n, rows, cols, spec.kind.directed)


def assign_weights(edges: EdgeSet, seed: int) -> sp.csr_matrix:
    """Uniform[-1, 1] weight per edge; undirected edges share one draw."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1.0, 1.0, size=len(edges))
    if edges.directed:
        rows, cols, data = edges.rows, edges.cols, w
    else:
        rows = np.concatenate([edges.rows, edges.cols])
        cols = np.concatenate([edges.cols, edges.rows])
        data = np.concatenate([w, w])
    mat = sp.csr_matrix((data, (rows, cols)), shape=(edges.n, edges.n))
    mat.sort_indices()
    return mat


def _is_symmetric(matrix: sp.spmatrix) -> bool:
    diff = matrix - matrix.T
    return diff.nnz == 0 or not np.any(diff.data)


def spectral_radius(matrix, tol: float = 1e-12, maxiter: int | None = None) -> float:
    """Largest eigenvalue magnitude of a square (sparse or dense) matrix.

    Small matrices use a dense eigensolver. Larger ones use implicitly
    restarted Arnoldi/Lanczos, which copes with the complex-conjugate and
    near-degenerate leading eigenvalues of random nonsymmetric matrices.
    """
    mat = sp.csr_matrix(matrix, dtype=float)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"matrix must be square, got {mat.shape}")
    if mat.nnz == 0 or not np.any(mat.data):
        return 0.0
    if n <= DENSE_EIG_MAX_N:
        dense = mat.toarray()
        if _is_symmetric(mat):
            return float(np.max(np.abs(np.linalg.eigvalsh(dense))))
        return float(np.max(np.abs(np.linalg.eigvals(dense))))

    v0 = np.random.default_rng(12345).standard_normal(n)
    k = 6
    try:
        if _is_symmetric(mat):
            vals = eigsh(mat, k=k, which="LM", tol=tol, v0=v0, maxiter=maxiter,
                         return_eigenvectors=False)
        else:
            vals = eigs(mat, k=k, which="LM", tol=tol, v0=v0, maxiter=maxiter,
                        return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise SpectralRadiusError(
            f"leading eigenvalue did not converge (n={n}): {exc}"
        ) from exc
    return float(np.max(np.abs(vals)))


def scale_to_spectral_radius(matrix, target_rho: float,
                             spec: TopologySpec | None = None) -> ReservoirNetwork:
    """Rescale ``matrix`` so its spectral radius equals ``target_rho``."""
    if target_rho < 0:
        raise ValueError("target_rho must be nonnegative")
    mat = sp.csr_matrix(matrix, dtype=float, copy=True)
    if target_rho == 0:
        zero = sp.csr_matrix(mat.shape, dtype=float)
        return ReservoirNetwork(zero, 0.0, spec)
    current = spectral_radius(mat)
    if current < 1e-12:
        raise SpectralRadiusError(
            f"spectral radius {current:.3e} is zero; cannot scale to {target_rho}"
        )
    mat.data *= target_rho / current
    return ReservoirNetwork(mat, float(target_rho), spec)


def build_reservoir(spec: TopologySpec, rho: float, weight_seed: int) -> ReservoirNetwork:
    edges = generate_topology(spec)
    return scale_to_spectral_radius(assign_weights(edges, weight_seed), rho, spec)


def write_edge_list(network: ReservoirNetwork, path) -> None:
    coo = network.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# n={network.n}", f"# rho={network.spectral_radius!r}"]
    lines += [f"{i} {j} {w:.17g}" for i, j, w in
              zip(coo.row[order], coo.col[order], coo.data[order])]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> ReservoirNetwork:
    n = rho = None
    rows, cols, data = [], [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "n":
                n = int(value)
            elif key == "rho":
                rho = float(value)
            continue
        if line.strip():
            i, j, w = line.split()
            rows.append(int(i))
            cols.append(int(j))
            data.append(float(w))
    if n is None or rho is None:
        raise ValueError(f"{path}: missing '# n=' or '# rho=' header")
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return ReservoirNetwork(mat, rho)
