"""Per-agent cost functions and their curvature constants.

An ensemble holds one cost per agent plus everything the certificates
need: per-agent smoothness, the smoothness and strong convexity of the
average cost, the minimizer of the average cost, and the largest
gradient norm any agent has at that minimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, ConstructionError

# Strong convexity below this is treated as degenerate.
MU_FLOOR = 1e-10

_OPT_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class CostEnsemble:
    """Costs ``f_i`` for agents ``0..m-1`` over R^dim.

    Two kinds are supported: "least_squares" with
    ``f_i(x) = ||A_i x - y_i||^2`` and "quadratic" with scalar costs
    ``f_i(x) = c_i x^2`` (the coefficients may be negative as long as
    the average stays strongly convex). The average cost is
    ``f = (1/m) sum_i f_i``.
    """

    kind: str
    m: int
    dim: int
    L_each: np.ndarray
    L: float
    mu: float
    x_star: np.ndarray
    D: float
    A: np.ndarray | None = None
    y: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    # 2 A_i^T A_i and 2 A_i^T y_i, precomputed for the gradient hot path
    _gram2: np.ndarray | None = field(default=None, repr=False)
    _h2: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for arr in (self.L_each, self.x_star, self.A, self.y, self.coeffs,
                    self._gram2, self._h2):
            if arr is not None:
                arr.setflags(write=False)

    def value_i(self, i: int, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "least_squares":
            r = self.A[i] @ x - self.y[i]
            return float(r @ r)
        return float(self.coeffs[i] * x[0] * x[0])

    def grad_i(self, i: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "least_squares":
            return self._gram2[i] @ x - self._h2[i]
        return 2.0 * self.coeffs[i] * x

    def gradients(self, x: np.ndarray) -> np.ndarray:
        """Stacked gradients: row i is the gradient of f_i at row i of x."""
        if self.kind == "least_squares":
            return (self._gram2 @ x[:, :, None])[:, :, 0] - self._h2
        return (2.0 * self.coeffs)[:, None] * x

    def total_value(self, x) -> float:
        return sum(self.value_i(i, x) for i in range(self.m)) / self.m

    def total_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts = np.broadcast_to(x, (self.m, self.dim))
        return self.gradients(np.ascontiguousarray(pts)).sum(axis=0) / self.m

    def to_json(self) -> str:
        data = {
            "kind": self.kind,
            "m": self.m,
            "dim": self.dim,
            "L_each": self.L_each.tolist(),
            "L": self.L,
            "mu": self.mu,
            "x_star": self.x_star.tolist(),
            "D": self.D,
        }
        if self.kind == "least_squares":
            data["A"] = self.A.tolist()
            data["y"] = self.y.tolist()
        else:
            data["coeffs"] = self.coeffs.tolist()
        return json.dumps(data, sort_keys=True)


def eta(mu: float, L: float) -> float:
    """Harmonic-style combination ``mu L / (mu + L)`` of the two moduli."""
    if mu <= 0.0 or L <= 0.0:
        raise ValueError(f"need mu > 0 and L > 0, got mu={mu}, L={L}")
    return mu * L / (mu + L)


def grad_norm_at_opt(e: CostEnsemble) -> float:
    """Largest per-agent gradient norm at the average-cost minimizer."""
    g = e.gradients(np.ascontiguousarray(
        np.broadcast_to(e.x_star, (e.m, e.dim))))
    return float(np.max(np.linalg.norm(g, axis=1)))


def least_squares_from_data(a_blocks, y_blocks) -> CostEnsemble:
    """Build a least-squares ensemble from explicit ``A_i`` and ``y_i``.

    The minimizer of the average cost solves the pooled normal
    equations; construction fails if those are degenerate.
    """
    a = np.ascontiguousarray(np.asarray(a_blocks, dtype=float))
    y = np.ascontiguousarray(np.asarray(y_blocks, dtype=float))
    if a.ndim != 3:
        raise ValueError(f"A blocks must be (m, n, dim), got shape {a.shape}")
    m, n, dim = a.shape
    if y.shape != (m, n):
        raise ValueError(f"y blocks must be {(m, n)}, got {y.shape}")

    gram = np.einsum("ink,inl->ikl", a, a)
    per_agent = 2.0 * np.linalg.eigvalsh(gram)[:, -1]
    total_gram = gram.sum(axis=0)
    mu = float(2.0 / m * np.linalg.eigvalsh(total_gram)[0])
    if mu <= MU_FLOOR:
        raise ConstructionError(
            f"average cost is not strongly convex (mu={mu:.3e})"
        )
    rhs = np.einsum("ink,in->k", a, y)
    try:
        x_star = np.linalg.solve(total_gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConstructionError(f"singular normal equations: {exc}") from exc

    gram2 = np.ascontiguousarray(2.0 * gram)
    h2 = np.ascontiguousarray(2.0 * np.einsum("ink,in->ik", a, y))
    grads_at_opt = gram2 @ x_star - h2
    resid = float(np.linalg.norm(grads_at_opt.sum(axis=0) / m))
    if resid > _OPT_RESIDUAL_TOL * (1.0 + float(np.linalg.norm(x_star))):
        raise ConstructionError(
            f"normal-equation solve left residual {resid:.3e}"
        )
    return CostEnsemble(
        kind="least_squares",
        m=m,
        dim=dim,
        L_each=np.ascontiguousarray(per_agent),
        L=float(np.max(per_agent)),
        mu=mu,
        x_star=np.ascontiguousarray(x_star),
        D=float(np.max(np.linalg.norm(grads_at_opt, axis=1))),
        A=a,
        y=y,
        _gram2=gram2,
        _h2=h2,
    )


def random_least_squares(m: int = 10, n: int = 5, dim: int = 3,
                         noise_sigma: float = 0.1, seed: int = 0,
                         max_retries: int = 50) -> CostEnsemble:
    """Random regression ensemble.

    Each ``A_i`` has i.i.d. uniform [0, 1) entries; measurements are
    ``y_i = A_i x_plant + noise`` with i.i.d. Gaussian noise of standard
    deviation ``noise_sigma``. The planted point is uniform on [0, 1)^dim;
    the reported minimizer comes from the pooled normal equations, not
    from the plant. Draws with degenerate curvature are rejected and
    resampled.
    """
    if m < 1 or n < 1 or dim < 1:
        raise ValueError(f"need m, n, dim >= 1, got {(m, n, dim)}")
    if noise_sigma < 0.0:
        raise ValueError(f"need noise_sigma >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    last_err = None
    for _ in range(max_retries):
        a = rng.uniform(size=(m, n, dim))
        x_plant = rng.uniform(size=dim)
        y = a @ x_plant + noise_sigma * rng.standard_normal((m, n))
        try:
            return least_squares_from_data(a, y)
        except ConstructionError as exc:
            last_err = exc
    raise ConstructionError(
        f"no well-conditioned ensemble in {max_retries} tries: {last_err}"
    )


def quadratic_pair(a1: float, a2: float) -> CostEnsemble:
    """Two scalar costs ``a1 x^2`` and ``-a2 x^2`` with ``a1 > a2 > 0``.

    The average cost is strongly convex with modulus ``a1 - a2`` even
    though the second agent's cost is concave; the shared minimizer is 0
    and both agents have zero gradient there.
    """
    if a2 <= 0.0:
        raise ValueError(f"need a2 > 0, got {a2}")
    if a1 <= a2:
        raise ValueError(f"need a1 > a2, got a1={a1}, a2={a2}")
    coeffs = np.array([a1, -a2])
    return CostEnsemble(
        kind="quadratic",
        m=2,
        dim=1,
        L_each=np.array([2.0 * a1, 2.0 * a2]),
        L=2.0 * a1,
        mu=a1 - a2,
        x_star=np.zeros(1),
        D=0.0,
        coeffs=coeffs,
    )


def ensemble_from_json(text: str) -> CostEnsemble:
    """Rebuild an ensemble from its JSON form, recomputing the derived
    constants and checking them against the stored ones."""
    data = json.loads(text)
    if data["kind"] == "least_squares":
        e = least_squares_from_data(data["A"], data["y"])
    elif data["kind"] == "quadratic":
        c1, c2 = data["coeffs"]
        e = quadratic_pair(c1, -c2)
    else:
        raise ValueError(f"unknown ensemble kind: {data['kind']!r}")
    for name in ("mu", "L", "D"):
        stored = float(data[name])
        got = float(getattr(e, name))
        if abs(stored - got) > 1e-9 * (1.0 + abs(stored)):
            raise AssumptionViolation(
                f"stored {name}={stored} disagrees with recomputed {got}"
            )
    return e
