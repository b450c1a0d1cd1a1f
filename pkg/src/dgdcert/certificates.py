"""Closed-form error envelopes for admissible runs.

Everything here is evaluated exactly as written: sums are direct
summations (no integral shortcuts), floors are floors, and the
recursion oracles iterate the underlying inequalities with equality as
the worst case so the closed forms can be checked against them.

The envelope family:

* ``uniform_radius`` - a radius R such that the average stays within R
  of the minimizer and the disagreement stays within (eta/L) R, for all
  iterations, provided the initial stepsize is strictly below the
  consensus-drift threshold.
* ``consensus_envelope`` - decay of the disagreement, driven by the
  stepsize at half time plus two geometrically mixing tails.
* ``rate_envelope_sub`` - decay of the average's error for exponents
  p < 1: a leading (t/2 + w - 1)^(-p) term plus three remainder terms
  (initial decay, mid-range forcing, mixing tail).
* ``rate_envelope_p1`` - the p = 1 analogue, valid when a > 2 / eta.

``damped_recursion_bound`` and ``geometric_forcing_bound`` are the two
scalar-recursion bounds the envelopes are assembled from, exposed with
their own hypotheses so they can be stress-tested independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CertificateUnavailable, HypothesisViolation
from .network import MixingMatrix
from .objectives import CostEnsemble, eta
from .schedules import StepsizeSchedule, check_schedule

SQRT_E = math.sqrt(math.e)

_J_REL_TOL = 1e-15
_J_MAX_TERMS = 10**6
_L_GRID = 1000


def _decay_pow(base: float, expo: float) -> float:
    """``base ** expo`` with the 0^0 = 1 and 0^negative = inf conventions."""
    if base == 0.0:
        if expo > 0.0:
            return 0.0
        if expo == 0.0:
            return 1.0
        return math.inf
    return float(base) ** float(expo)


def uniform_radius(mu: float, L: float, beta: float, D: float, m: int,
                   alpha0: float, mean_gap0: float,
                   cons_gap0: float) -> float:
    """Radius of the ball the run never leaves.

    Finite only when ``alpha0`` is strictly below the consensus-drift
    threshold ``eta (1 - beta) / (L (eta + L))``; otherwise a
    CertificateUnavailable is raised with the threshold in the message.
    """
    e = eta(mu, L)
    threshold = e * (1.0 - beta) / (L * (e + L))
    denom = e * (1.0 - beta) / L - (e + L) * alpha0
    if denom <= 0.0:
        raise CertificateUnavailable(
            f"alpha0={alpha0:.6e} is not strictly below the consensus "
            f"threshold {threshold:.6e}; no finite uniform radius"
        )
    return max(
        mean_gap0,
        (L / e) * cons_gap0,
        math.sqrt(m) * D * alpha0 / denom,
    )


@dataclass(frozen=True)
class ProblemConstants:
    """Everything the envelopes need, computed once per run."""

    mu: float
    L: float
    eta: float
    beta: float
    D: float
    m: int
    schedule: StepsizeSchedule
    alpha0: float
    mean_gap0: float
    cons_gap0: float
    total_gap0: float
    R: float
    d_drift: float
    R0: float
    Q1: float | None
    Q0: float | None

    @property
    def a(self):
        return self.schedule.a

    @property
    def w(self):
        return self.schedule.w

    @property
    def p(self):
        return self.schedule.p

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "L": self.L, "eta": self.eta, "beta": self.beta,
            "D": self.D, "m": self.m, "alpha0": self.alpha0,
            "mean_gap0": self.mean_gap0, "cons_gap0": self.cons_gap0,
            "total_gap0": self.total_gap0, "R": self.R,
            "d_drift": self.d_drift, "R0": self.R0,
            "Q1": self.Q1, "Q0": self.Q0,
        }


def problem_constants(e: CostEnsemble, mixing: MixingMatrix,
                      schedule: StepsizeSchedule,
                      x0: np.ndarray) -> ProblemConstants:
    """Assemble the certificate constants for a run starting at ``x0``.

    Raises CertificateUnavailable when the schedule is not strictly
    admissible (the drift radius would be infinite).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (e.m, e.dim):
        raise ValueError(f"x0 has shape {x0.shape}, expected {(e.m, e.dim)}")
    xbar = x0.mean(axis=0)
    mean_gap0 = float(math.sqrt(e.m) * np.linalg.norm(xbar - e.x_star))
    cons_gap0 = float(np.linalg.norm(x0 - xbar))
    total_gap0 = float(np.linalg.norm(x0 - e.x_star[None, :]))

    beta = mixing.beta
    report = check_schedule(schedule, e.mu, e.L, beta)
    if not report.admissible_strict:
        raise CertificateUnavailable(
            f"schedule alpha0={report.alpha0:.6e} is not strictly below "
            f"the consensus threshold {report.bound_consensus:.6e} "
            f"(smoothness threshold {report.bound_smooth:.6e})"
        )
    et = eta(e.mu, e.L)
    alpha0 = schedule.alpha0
    radius = uniform_radius(e.mu, e.L, beta, e.D, e.m, alpha0,
                            mean_gap0, cons_gap0)
    d_drift = 2.0 * e.L * radius + math.sqrt(e.m) * e.D
    r0 = cons_gap0 + d_drift * alpha0 / (1.0 - beta)
    q1 = q0 = None
    if schedule.is_polynomial:
        q1 = ((schedule.w + 1.0) / schedule.w) ** (2.0 * schedule.p)
        q0 = q1 * e.L * d_drift * 2.0 ** schedule.p / et
    return ProblemConstants(
        mu=e.mu, L=e.L, eta=et, beta=beta, D=e.D, m=e.m,
        schedule=schedule, alpha0=alpha0,
        mean_gap0=mean_gap0, cons_gap0=cons_gap0, total_gap0=total_gap0,
        R=radius, d_drift=d_drift, R0=r0, Q1=q1, Q0=q0,
    )


def consensus_envelope(t: int, pc: ProblemConstants) -> float:
    """Upper envelope for the disagreement ``||x(t) - xbar(t)||``."""
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    beta = pc.beta
    drift = pc.d_drift / (1.0 - beta)
    return (
        drift * pc.schedule.alpha(t // 2)
        + _decay_pow(beta, t) * pc.cons_gap0
        + _decay_pow(beta, t / 2.0) * drift * pc.alpha0
    )


def _require_polynomial(pc: ProblemConstants):
    if not pc.schedule.is_polynomial:
        raise HypothesisViolation(
            "rate envelopes need a polynomial schedule"
        )


def rate_envelope_sub(t: int, pc: ProblemConstants):
    """Envelope for the average's error with exponent p < 1.

    Returns ``(value, y1, y2, y3)`` where value includes the leading
    ``(floor(t/2) + w - 1)^(-p)`` term and y1..y3 are the remainder
    terms (all of higher order).
    """
    _require_polynomial(pc)
    if pc.p >= 1.0:
        raise HypothesisViolation(
            f"this envelope needs p < 1, got p={pc.p}; "
            "use the harmonic-stepsize envelope instead"
        )
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    a, w, p = pc.a, pc.w, pc.p
    ea = pc.eta * a
    one_m_beta = 1.0 - pc.beta
    sqrt_beta = math.sqrt(pc.beta)

    lead = pc.Q0 * SQRT_E * a / one_m_beta * _decay_pow(t // 2 + w - 1.0, -p)

    s = np.arange(t, dtype=float)
    y1 = math.exp(-ea * float(np.sum((s + w) ** (-p)))) * pc.total_gap0

    k = t // 2 - 1
    if k >= 1:
        s2 = np.arange(1, k + 1, dtype=float)
        mid_sum = float(np.sum(a * a / (w + s2) ** (2.0 * p)))
    else:
        mid_sum = 0.0
    y2 = (pc.Q0 / one_m_beta
          * math.exp(-(ea / 2.0) * t / (t + w) ** p) * mid_sum)

    tail = (
        math.exp(-(ea / 2.0) * (t - 1.0) / (t + w) ** p) / (1.0 - sqrt_beta)
        + _decay_pow(sqrt_beta, (t - 1) // 2) / (1.0 - sqrt_beta)
    )
    y3 = a * pc.L * pc.R0 / (one_m_beta * w ** p) * tail

    return lead + y1 + y2 + y3, y1, y2, y3


def rate_envelope_p1(t: int, pc: ProblemConstants, l: float):
    """Envelope for the average's error with p = 1 and ``a > 2 / eta``.

    ``l`` tunes the mixing-tail term; it must satisfy
    ``0 <= l <= max(a - 1, 0)`` and ``exp(l / (w + 1)) sqrt(beta) < 1``.
    Returns ``(value, y4)``.
    """
    _require_polynomial(pc)
    if pc.p != 1.0:
        raise HypothesisViolation(f"this envelope needs p = 1, got p={pc.p}")
    if pc.a <= 2.0 / pc.eta:
        raise HypothesisViolation(
            f"harmonic envelope needs a > 2/eta = {2.0 / pc.eta:.6e}, "
            f"got a={pc.a:.6e}"
        )
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    a, w = pc.a, pc.w
    _check_l(l, a, w, math.sqrt(pc.beta))
    sqrt_beta = math.sqrt(pc.beta)
    one_m_beta = 1.0 - pc.beta

    head = (w / (t + w)) ** (pc.eta * a) * pc.total_gap0
    lead = 2.0 * SQRT_E * pc.Q0 / one_m_beta * a / (t + w + 1.0)

    geo = 1.0 - math.exp(l / (w + 1.0)) * sqrt_beta
    first = w * (w + 1.0) ** (l - 1.0) / (geo * (t + w) ** (l + 1.0))
    denom = t - 1.0 + w
    num = _decay_pow(sqrt_beta, t)
    if denom <= 0.0:
        second = math.inf if num > 0.0 else 0.0
    else:
        second = num / denom
    y4 = a * pc.L * pc.R0 / one_m_beta * (first + second)
    return head + lead + y4, y4


def _check_l(l: float, a: float, w: float, decay: float):
    l_hi = max(a - 1.0, 0.0)
    if not (0.0 <= l <= l_hi):
        raise ValueError(f"need 0 <= l <= {l_hi}, got l={l}")
    if decay * math.exp(l / (w + 1.0)) >= 1.0:
        raise ValueError(
            f"l={l} violates the mixing constraint "
            f"exp(l/(w+1)) * {decay} < 1"
        )


def _best_l(a: float, w: float, decay: float, base: float) -> float:
    """Grid-search the tail exponent l on [0, max(a-1, 0)].

    Minimizes ``w (w+1)^(l-1) / ((1 - decay e^(l/(w+1))) base^(l+1))``
    over the feasible grid; l = 0 is always feasible since decay < 1.
    """
    l_hi = max(a - 1.0, 0.0)
    grid = np.linspace(0.0, l_hi, _L_GRID + 1) if l_hi > 0.0 else np.array([0.0])
    geo = 1.0 - decay * np.exp(grid / (w + 1.0))
    feasible = geo > 0.0
    grid, geo = grid[feasible], geo[feasible]
    vals = w * (w + 1.0) ** (grid - 1.0) / (geo * base ** (grid + 1.0))
    return float(grid[np.argmin(vals)])


def choose_l(a: float, w: float, beta: float, t_ref: int) -> float:
    """Pick the tail exponent that minimizes the p = 1 envelope at a
    reference horizon. The constraint is ``exp(l/(w+1)) sqrt(beta) < 1``."""
    if t_ref < 0:
        raise ValueError(f"need t_ref >= 0, got {t_ref}")
    return _best_l(a, w, math.sqrt(beta), t_ref + w)


# ---------------------------------------------------------------------------
# scalar recursion bounds


def _check_damped(c1, c2, p, q, w, a0):
    if c1 <= 0.0 or c2 < 0.0 or a0 < 0.0:
        raise ValueError(
            f"need c1 > 0, c2 >= 0, a0 >= 0, got {(c1, c2, a0)}"
        )
    if not (0.0 < p <= 1.0):
        raise ValueError(f"need 0 < p <= 1, got p={p}")
    if q <= 0.0:
        raise ValueError(f"need q > 0, got q={q}")
    if w < 1.0:
        raise ValueError(f"need w >= 1, got w={w}")
    if c1 / w ** p >= 1.0:
        raise HypothesisViolation(
            f"need c1 / w^p < 1, got {c1 / w ** p}"
        )


def damped_recursion_bound(c1: float, c2: float, p: float, q: float,
                           w: float, a0: float, t: int) -> float:
    """Closed-form bound for ``A(t)`` under the recursion

        A(t) <= (1 - c1/(t+w-1)^p) A(t-1) + c2/(t+w-1)^(p+q),  t >= 1.

    Needs ``c1 / w^p < 1``. The p = 1 branch switches form at q = c1
    (compared exactly), where the damping and forcing exponents tie and
    a logarithm appears.
    """
    _check_damped(c1, c2, p, q, w, a0)
    if t < 1:
        raise ValueError(f"need t >= 1, got {t}")
    qq = ((w + 1.0) / w) ** (p + q)
    if p < 1.0:
        delta = qq * c2 / c1 * math.exp(c1 / w ** p)
        lead = delta * _decay_pow(t // 2 + w - 1.0, -q)
        s = np.arange(t, dtype=float)
        r1 = math.exp(-c1 * float(np.sum((s + w) ** (-p)))) * a0
        k = t // 2 - 1
        if k >= 1:
            s2 = np.arange(1, k + 1, dtype=float)
            ssum = float(np.sum((s2 + w) ** (-(p + q))))
        else:
            ssum = 0.0
        r2 = qq * c2 * math.exp(-c1 * t / (2.0 * (t + w) ** p)) * ssum
        return lead + r1 + r2
    head = (w / (t + w)) ** c1 * a0
    if q > c1:
        rem = w ** (c1 - q) / (q - c1) * qq * c2 / (t + w) ** c1
    elif q == c1:
        rem = math.log((t + w) / w) * qq * c2 / (t + w) ** c1
    else:
        rem = (((w + 1.0) / w) ** c1 * qq * c2
               / ((c1 - q) * (t + w + 1.0) ** q))
    return head + rem


def damped_recursion_bound_series(c1, c2, p, q, w, a0, t_max) -> np.ndarray:
    """Vector of ``damped_recursion_bound`` values for t = 0..t_max
    (entry 0 is a0 itself). Same formulas, evaluated with cumulative
    sums instead of per-t resummation."""
    _check_damped(c1, c2, p, q, w, a0)
    if t_max < 1:
        raise ValueError(f"need t_max >= 1, got {t_max}")
    t = np.arange(1, t_max + 1, dtype=float)
    tf = np.arange(1, t_max + 1) // 2
    qq = ((w + 1.0) / w) ** (p + q)
    out = np.empty(t_max + 1)
    out[0] = a0
    if p < 1.0:
        delta = qq * c2 / c1 * math.exp(c1 / w ** p)
        with np.errstate(divide="ignore"):
            lead = delta * (tf + w - 1.0) ** (-q)
        cum_p = np.concatenate(
            [[0.0], np.cumsum((np.arange(t_max, dtype=float) + w) ** (-p))])
        r1 = np.exp(-c1 * cum_p[1:]) * a0
        kmax = t_max // 2 - 1
        if kmax >= 1:
            cum_pq = np.concatenate(
                [[0.0],
                 np.cumsum((np.arange(1, kmax + 1, dtype=float) + w)
                           ** (-(p + q)))])
        else:
            cum_pq = np.zeros(1)
        k = np.maximum(np.arange(1, t_max + 1) // 2 - 1, 0)
        ssum = cum_pq[k]
        r2 = qq * c2 * np.exp(-c1 * t / (2.0 * (t + w) ** p)) * ssum
        out[1:] = lead + r1 + r2
        return out
    head = (w / (t + w)) ** c1 * a0
    if q > c1:
        rem = w ** (c1 - q) / (q - c1) * qq * c2 / (t + w) ** c1
    elif q == c1:
        rem = np.log((t + w) / w) * qq * c2 / (t + w) ** c1
    else:
        rem = (((w + 1.0) / w) ** c1 * qq * c2
               / ((c1 - q) * (t + w + 1.0) ** q))
    out[1:] = head + rem
    return out


def _check_geometric(a, b, w, p, beta):
    if a <= 0.0 or b < 0.0:
        raise ValueError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    if w < 1.0:
        raise ValueError(f"need w >= 1, got w={w}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"need 0 < p <= 1, got p={p}")
    if not (0.0 <= beta < 1.0):
        raise ValueError(f"need 0 <= beta < 1, got beta={beta}")
    if a / w ** p >= 1.0:
        raise HypothesisViolation(f"need a / w^p < 1, got {a / w ** p}")


def _j_factor(a: float, w: float, beta: float) -> float:
    """``sum_j ((j+w)/w)^(a-1) beta^j``, truncated when the next term
    drops below 1e-15 of the partial sum (capped at 1e6 terms)."""
    total = 0.0
    bpow = 1.0
    for j in range(_J_MAX_TERMS):
        term = ((j + w) / w) ** (a - 1.0) * bpow
        total += term
        if term < _J_REL_TOL * total:
            break
        bpow *= beta
    return total


def geometric_forcing_bound(a: float, b: float, w: float, p: float,
                            beta: float, t: int,
                            l: float | None = None) -> float:
    """Closed-form bound for ``B(t+1)`` under the recursion

        B(t+1) <= (1 - a/(t+w)^p) B(t) + b beta^t / (t+w)^p,  B(0) = 0.

    Needs ``a / w^p < 1``. For p = 1 this is the minimum of two printed
    forms: a series form whose constant sums the polynomially tilted
    geometric series, and a tunable form with exponent ``l`` (searched
    on [0, max(a-1, 0)] when not supplied, subject to
    ``beta exp(l/(w+1)) < 1``). Note the bound is for the value at
    ``t + 1``, matching the recursion's left-hand side.
    """
    _check_geometric(a, b, w, p, beta)
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    if p < 1.0:
        return (b / (w ** p * (1.0 - beta))
                * (math.exp(-(a / 2.0) * t / (t + 1.0 + w) ** p)
                   + _decay_pow(beta, t // 2)))
    geo_tail = b * _decay_pow(beta, t) / (t + w)
    j_form = _j_factor(a, w, beta) * b * w ** (a - 1.0) / (t + w) ** a \
        + geo_tail
    if l is None:
        l = _best_l(a, w, beta, t + 1.0 + w)
    else:
        _check_l(l, a, w, beta)
    geo = 1.0 - beta * math.exp(l / (w + 1.0))
    l_form = (b * w * (w + 1.0) ** (l - 1.0)
              / (geo * (t + 1.0 + w) ** (l + 1.0))) + geo_tail
    return min(j_form, l_form)


def geometric_forcing_bound_series(a, b, w, p, beta, t_max,
                                   l: float | None = None) -> np.ndarray:
    """Vector of ``geometric_forcing_bound`` values for t = 0..t_max-1;
    entry t bounds B(t+1). For p = 1 the tunable exponent is fixed
    across the grid (searched at the final t when not supplied)."""
    _check_geometric(a, b, w, p, beta)
    if t_max < 1:
        raise ValueError(f"need t_max >= 1, got {t_max}")
    t = np.arange(t_max, dtype=float)
    with np.errstate(under="ignore"):
        bpow = beta ** t if beta > 0.0 else (t == 0.0).astype(float)
    if p < 1.0:
        return (b / (w ** p * (1.0 - beta))
                * (np.exp(-(a / 2.0) * t / (t + 1.0 + w) ** p)
                   + (beta ** (np.arange(t_max) // 2) if beta > 0.0
                      else (np.arange(t_max) // 2 == 0).astype(float))))
    geo_tail = b * bpow / (t + w)
    j_form = _j_factor(a, w, beta) * b * w ** (a - 1.0) / (t + w) ** a \
        + geo_tail
    if l is None:
        l = _best_l(a, w, beta, t_max + w)
    else:
        _check_l(l, a, w, beta)
    geo = 1.0 - beta * math.exp(l / (w + 1.0))
    l_form = (b * w * (w + 1.0) ** (l - 1.0)
              / (geo * (t + 1.0 + w) ** (l + 1.0))) + geo_tail
    return np.minimum(j_form, l_form)


def recursion_oracle(kind: str, params: dict, t_max: int) -> np.ndarray:
    """Iterate a bound's underlying recursion with equality (the worst
    case the bound must cover) and return the exact series 0..t_max.

    Kinds: "poly_forcing" with params c1, c2, p, q, w, a0 and
    "geometric_forcing" with params a, b, w, p, beta (starts at 0).
    """
    if t_max < 1:
        raise ValueError(f"need t_max >= 1, got {t_max}")
    if kind == "poly_forcing":
        c1, c2 = params["c1"], params["c2"]
        p, q, w, a0 = params["p"], params["q"], params["w"], params["a0"]
        _check_damped(c1, c2, p, q, w, a0)
        out = np.empty(t_max + 1)
        out[0] = a0
        val = a0
        for t in range(1, t_max + 1):
            shift = (t + w - 1.0) ** p
            val = (1.0 - c1 / shift) * val + c2 / (shift * (t + w - 1.0) ** q)
            out[t] = val
        return out
    if kind == "geometric_forcing":
        a, b, w = params["a"], params["b"], params["w"]
        p, beta = params["p"], params["beta"]
        _check_geometric(a, b, w, p, beta)
        out = np.empty(t_max + 1)
        out[0] = 0.0
        val = 0.0
        bpow = 1.0
        for t in range(t_max):
            shift = (t + w) ** p
            val = (1.0 - a / shift) * val + b * bpow / shift
            out[t + 1] = val
            bpow *= beta
        return out
    raise ValueError(f"unknown recursion kind: {kind!r}")


# ---------------------------------------------------------------------------
# certificate records


@dataclass(frozen=True)
class BoundCertificate:
    """An envelope evaluated on a time grid, with its term breakdown."""

    kind: str                     # "consensus" | "rate_sublinear" | "rate_harmonic"
    ts: np.ndarray
    values: np.ndarray
    components: dict
    constants: ProblemConstants
    l: float | None = None


def evaluate_certificate(kind: str, pc: ProblemConstants, ts,
                         l: float | None = None) -> BoundCertificate:
    """Evaluate one envelope at the given iterations.

    ``kind`` is "consensus" or "rate"; the rate envelope picks the
    sublinear or harmonic form from the schedule's exponent. For the
    harmonic form ``l`` is searched at the final grid point when not
    supplied.
    """
    ts = np.asarray(sorted(int(t) for t in ts), dtype=np.int64)
    if kind == "consensus":
        vals = np.array([consensus_envelope(int(t), pc) for t in ts])
        return BoundCertificate("consensus", ts, vals, {}, pc)
    if kind != "rate":
        raise ValueError(f"unknown certificate kind: {kind!r}")
    _require_polynomial(pc)
    if pc.p < 1.0:
        rows = [rate_envelope_sub(int(t), pc) for t in ts]
        vals = np.array([r[0] for r in rows])
        comps = {
            "y1": np.array([r[1] for r in rows]),
            "y2": np.array([r[2] for r in rows]),
            "y3": np.array([r[3] for r in rows]),
        }
        return BoundCertificate("rate_sublinear", ts, vals, comps, pc)
    if l is None:
        l = choose_l(pc.a, pc.w, pc.beta, int(ts[-1]))
    rows = [rate_envelope_p1(int(t), pc, l) for t in ts]
    vals = np.array([r[0] for r in rows])
    comps = {"y4": np.array([r[1] for r in rows])}
    return BoundCertificate("rate_harmonic", ts, vals, comps, pc, l=l)
