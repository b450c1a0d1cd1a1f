"""Stepsize schedules and their admissibility thresholds.

Diminishing schedules have the form ``alpha(t) = a / (t + w)^p`` with
``a > 0``, ``w >= 1`` and ``0 < p <= 1``; a constant schedule is also
supported for the bifurcation studies. Admissibility is judged against
two thresholds on the initial stepsize: the smoothness bound
``2 / (mu + L)`` and the stricter consensus-drift bound
``eta (1 - beta) / (L (eta + L))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation
from .objectives import eta


@dataclass(frozen=True)
class StepsizeSchedule:
    kind: str
    a: float | None = None
    w: float | None = None
    p: float | None = None
    alpha_const: float | None = None

    @property
    def is_polynomial(self) -> bool:
        return self.kind == "polynomial"

    def alpha(self, t) -> float:
        """Stepsize at iteration t (t >= 0)."""
        if self.kind == "polynomial":
            return self.a / (t + self.w) ** self.p
        return self.alpha_const

    def alpha_array(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.kind == "polynomial":
            return self.a / (ts + self.w) ** self.p
        return np.full(ts.shape, self.alpha_const)

    @property
    def alpha0(self) -> float:
        return self.alpha(0)

    def to_json(self) -> str:
        if self.kind == "polynomial":
            return json.dumps(
                {"kind": "polynomial", "a": self.a, "w": self.w, "p": self.p},
                sort_keys=True,
            )
        return json.dumps(
            {"kind": "constant", "alpha": self.alpha_const}, sort_keys=True
        )

    @staticmethod
    def from_json(text: str) -> "StepsizeSchedule":
        data = json.loads(text)
        if data["kind"] == "polynomial":
            return polynomial_schedule(data["a"], data["w"], data["p"])
        if data["kind"] == "constant":
            return constant_schedule(data["alpha"])
        raise ValueError(f"unknown schedule kind: {data['kind']!r}")


def polynomial_schedule(a: float, w: float, p: float) -> StepsizeSchedule:
    if a <= 0.0:
        raise ValueError(f"need a > 0, got {a}")
    if w < 1.0:
        raise ValueError(f"need w >= 1, got {w}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"need 0 < p <= 1, got {p}")
    return StepsizeSchedule(kind="polynomial", a=float(a), w=float(w),
                            p=float(p))


def constant_schedule(alpha: float) -> StepsizeSchedule:
    if alpha <= 0.0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    return StepsizeSchedule(kind="constant", alpha_const=float(alpha))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Initial-stepsize thresholds and where the schedule stands.

    ``admissible_weak`` allows running with the per-step contraction
    estimates; ``admissible_strict`` additionally keeps the uniform
    radius finite, which every certificate requires. ``p1_rate_ok`` is
    only meaningful for polynomial schedules with p = 1, where the
    harmonic rate needs ``a > 2 / eta``; otherwise it is None.
    """

    bound_smooth: float
    bound_consensus: float
    alpha0: float
    admissible_weak: bool
    admissible_strict: bool
    p1_rate_ok: bool | None

    def to_dict(self) -> dict:
        return {
            "bound_smooth": self.bound_smooth,
            "bound_consensus": self.bound_consensus,
            "alpha0": self.alpha0,
            "admissible_weak": self.admissible_weak,
            "admissible_strict": self.admissible_strict,
            "p1_rate_ok": self.p1_rate_ok,
        }


def check_schedule(s: StepsizeSchedule, mu: float, L: float,
                   beta: float) -> AdmissibilityReport:
    """Evaluate a schedule against the stepsize thresholds."""
    if not (0.0 <= beta < 1.0):
        raise AssumptionViolation(
            f"need contraction factor beta in [0, 1), got {beta}"
        )
    e = eta(mu, L)
    bound_smooth = 2.0 / (mu + L)
    bound_consensus = e * (1.0 - beta) / (L * (e + L))
    alpha0 = s.alpha0
    p1_rate_ok = None
    if s.is_polynomial and s.p == 1.0:
        p1_rate_ok = s.a > 2.0 / e
    return AdmissibilityReport(
        bound_smooth=bound_smooth,
        bound_consensus=bound_consensus,
        alpha0=alpha0,
        admissible_weak=alpha0 <= min(bound_smooth, bound_consensus),
        admissible_strict=alpha0 < bound_consensus,
        p1_rate_ok=p1_rate_ok,
    )
