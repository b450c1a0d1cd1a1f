"""Communication graphs and doubly stochastic mixing matrices.

A mixing matrix couples the agents of a decentralized method; its
deviation from the averaging projector contracts disagreement at rate
``beta``, the spectral norm of ``W - (1/m) 11^T``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation, ConstructionError

# Absolute tolerance for stochasticity / sparsity / symmetry checks.
STOCHASTIC_TOL = 1e-12

# Above this size the dense symmetric eigendecomposition is replaced by
# power iteration on the deviation matrix.
DENSE_EIG_MAX = 512

_POWER_TOL = 1e-12
_POWER_MAXIT = 100_000


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on agents ``0..m-1``.

    Edges are stored as a frozenset of ``(i, j)`` pairs with ``i < j``.
    """

    m: int
    edges: frozenset

    @staticmethod
    def from_edges(m: int, edges) -> "Graph":
        if m < 1:
            raise ValueError(f"need at least one node, got m={m}")
        normalized = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < m and 0 <= j < m):
                raise ValueError(f"edge ({i},{j}) out of range for m={m}")
            normalized.add((min(i, j), max(i, j)))
        return Graph(m=m, edges=frozenset(normalized))

    def adjacency(self) -> dict:
        adj = {i: set() for i in range(self.m)}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def neighbors(self, i: int) -> set:
        return self.adjacency()[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency()[i])

    def is_connected(self) -> bool:
        if self.m == 1:
            return True
        adj = self.adjacency()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.m

    def to_json(self) -> str:
        return json.dumps(
            {"m": self.m, "edges": sorted(list(e) for e in self.edges)},
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Graph":
        data = json.loads(text)
        return Graph.from_edges(data["m"], data["edges"])


def build_graph(kind: str, m: int, *, q: float | None = None,
                seed: int | None = None, max_retries: int = 100) -> Graph:
    """Build a named connected topology on ``m >= 2`` nodes.

    Parameters
    ----------
    kind : {"ring", "path", "complete", "erdos_renyi"}
    q : edge probability, required for "erdos_renyi".
    seed : RNG seed, required for "erdos_renyi".
    max_retries : resampling budget for the random topology before a
        ConstructionError is raised.
    """
    if m < 2:
        raise ValueError(f"build_graph needs m >= 2, got {m}")
    if kind == "ring":
        edges = {(i, (i + 1) % m) for i in range(m)}
        return Graph.from_edges(m, edges)
    if kind == "path":
        return Graph.from_edges(m, {(i, i + 1) for i in range(m - 1)})
    if kind == "complete":
        return Graph.from_edges(
            m, {(i, j) for i in range(m) for j in range(i + 1, m)}
        )
    if kind == "erdos_renyi":
        if q is None or not (0.0 < q <= 1.0):
            raise ValueError(f"erdos_renyi needs edge probability q in (0,1], got {q}")
        if seed is None:
            raise ValueError("erdos_renyi needs a seed")
        rng = np.random.default_rng(seed)
        for _ in range(max_retries):
            edges = {
                (i, j)
                for i in range(m)
                for j in range(i + 1, m)
                if rng.random() < q
            }
            g = Graph.from_edges(m, edges)
            if g.is_connected():
                return g
        raise ConstructionError(
            f"no connected draw in {max_retries} tries (m={m}, q={q})"
        )
    raise ValueError(f"unknown graph kind: {kind!r}")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    """Per-invariant outcome of a mixing-matrix validation.

    ``ok`` requires row sums, column sums, nonnegativity, positive
    diagonal, and (when a graph is supplied) the sparsity pattern.
    Symmetry is reported but not required: double stochasticity alone
    supports the disagreement contraction.
    """

    checks: tuple
    ok: bool

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "magnitude": c.magnitude}
                for c in self.checks
            ],
        }


def validate_mixing(w, graph: Graph | None = None) -> ValidationReport:
    """Check the doubly stochastic invariants of a weight matrix.

    Accepts a raw square array or a MixingMatrix. Each check carries the
    worst violation magnitude (0.0 when it passes with margin).
    """
    if isinstance(w, MixingMatrix):
        if graph is None:
            graph = w.graph
        w = w.w
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    m = w.shape[0]
    tol = STOCHASTIC_TOL

    row_dev = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
    col_dev = float(np.max(np.abs(w.sum(axis=0) - 1.0)))
    neg_dev = float(max(0.0, -np.min(w)))
    min_diag = float(np.min(np.diag(w)))
    diag_dev = float(max(0.0, tol - min_diag))
    sym_dev = float(np.max(np.abs(w - w.T)))

    checks = [
        CheckResult("row_sums", row_dev <= tol, row_dev),
        CheckResult("col_sums", col_dev <= tol, col_dev),
        CheckResult("nonnegative", neg_dev <= tol, neg_dev),
        CheckResult("positive_diagonal", min_diag > tol, diag_dev),
    ]
    if graph is not None:
        if graph.m != m:
            raise ValueError(
                f"graph has {graph.m} nodes but matrix is {m}x{m}"
            )
        off = ~np.eye(m, dtype=bool)
        allowed = np.zeros((m, m), dtype=bool)
        for i, j in graph.edges:
            allowed[i, j] = allowed[j, i] = True
        spars_dev = float(np.max(np.abs(w[off & ~allowed]), initial=0.0))
        checks.append(CheckResult("sparsity", spars_dev <= tol, spars_dev))
    checks.append(CheckResult("symmetry", sym_dev <= tol, sym_dev))

    required = [c for c in checks if c.name != "symmetry"]
    ok = all(c.passed for c in required)
    return ValidationReport(checks=tuple(checks), ok=ok)


def _power_spectral_norm(b: np.ndarray) -> float:
    """Largest singular value of b via power iteration on b^T b."""
    m = b.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    sigma_prev = 0.0
    for _ in range(_POWER_MAXIT):
        u = b.T @ (b @ v)
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return 0.0
        v = u / norm_u
        sigma = float(np.sqrt(norm_u))
        if abs(sigma - sigma_prev) <= _POWER_TOL * max(sigma, 1.0):
            return sigma
        sigma_prev = sigma
    return sigma_prev


def spectral_gap(w) -> float:
    """Spectral norm of ``W - (1/m) 11^T`` for a doubly stochastic W.

    Returns a value in [0, 1]; 1 means the matrix cannot contract
    disagreement at all (e.g. the identity).
    """
    if isinstance(w, MixingMatrix):
        w = w.w
    w = np.asarray(w, dtype=float)
    report = validate_mixing(w)
    if not report.ok:
        failed = [c.name for c in report.checks
                  if not c.passed and c.name != "symmetry"]
        raise AssumptionViolation(
            f"matrix is not doubly stochastic (failed: {', '.join(failed)})"
        )
    m = w.shape[0]
    b = w - 1.0 / m
    if m <= DENSE_EIG_MAX:
        if np.max(np.abs(b - b.T)) <= STOCHASTIC_TOL:
            vals = np.linalg.eigvalsh(b)
            beta = float(np.max(np.abs(vals)))
        else:
            beta = float(np.max(np.linalg.svd(b, compute_uv=False)))
    else:
        beta = _power_spectral_norm(b)
    return float(min(max(beta, 0.0), 1.0))


@dataclass(frozen=True)
class MixingMatrix:
    """Validated doubly stochastic weights with their contraction factor."""

    w: np.ndarray
    beta: float
    graph: Graph

    def __post_init__(self):
        self.w.setflags(write=False)

    @property
    def m(self) -> int:
        return self.graph.m

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "edges": sorted(list(e) for e in self.graph.edges),
                "weights": [float(v) for v in self.w.ravel()],
                "beta": self.beta,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "MixingMatrix":
        data = json.loads(text)
        m = data["m"]
        g = Graph.from_edges(m, data["edges"])
        w = np.asarray(data["weights"], dtype=float).reshape(m, m)
        return mixing_from_matrix(w, graph=g)


def mixing_from_matrix(w, graph: Graph | None = None) -> MixingMatrix:
    """Wrap a raw weight matrix after validating it.

    When no graph is given the sparsity pattern is inferred from the
    nonzero off-diagonal entries.
    """
    w = np.ascontiguousarray(w, dtype=float)
    if graph is None:
        m = w.shape[0]
        edges = {
            (i, j)
            for i in range(m)
            for j in range(i + 1, m)
            if abs(w[i, j]) > STOCHASTIC_TOL or abs(w[j, i]) > STOCHASTIC_TOL
        }
        graph = Graph.from_edges(m, edges)
    report = validate_mixing(w, graph)
    if not report.ok:
        failed = [c.name for c in report.checks
                  if not c.passed and c.name != "symmetry"]
        raise AssumptionViolation(
            f"invalid mixing matrix (failed: {', '.join(failed)})"
        )
    return MixingMatrix(w=w, beta=spectral_gap(w), graph=graph)


def metropolis_weights(graph: Graph) -> MixingMatrix:
    """Metropolis weights ``w_ij = 1 / (1 + max(deg_i, deg_j))``.

    Valid (symmetric, doubly stochastic, positive diagonal) on any
    connected graph, which makes it the default mixing rule.
    """
    if not graph.is_connected():
        raise AssumptionViolation("graph is not connected")
    m = graph.m
    adj = graph.adjacency()
    deg = {i: len(adj[i]) for i in range(m)}
    w = np.zeros((m, m))
    for i, j in graph.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return mixing_from_matrix(w, graph=graph)


def two_agent_matrix(gamma: float) -> MixingMatrix:
    """Two agents exchanging a fraction ``gamma`` of their state.

    The contraction factor is ``1 - 2 gamma`` exactly.
    """
    if not (0.0 < gamma <= 0.5):
        raise ValueError(f"need 0 < gamma <= 1/2, got {gamma}")
    w = np.array([[1.0 - gamma, gamma], [gamma, 1.0 - gamma]])
    return mixing_from_matrix(w, graph=Graph.from_edges(2, {(0, 1)}))
