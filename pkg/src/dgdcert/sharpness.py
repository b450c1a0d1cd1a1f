"""Exact bifurcation analysis for the two-agent quadratic pair.

With costs ``a1 x^2`` and ``-a2 x^2`` (a1 > a2 > 0), pairwise mixing
``gamma`` and a constant stepsize, the iteration is linear and its 2x2
matrix has a closed-form spectrum. The top eigenvalue crosses 1 exactly
at ``alpha = gamma (a1 - a2) / (2 a1 a2)``, which pins down how much
slack the general stepsize threshold leaves on this family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolation
from .objectives import eta


@dataclass(frozen=True)
class SharpnessInstance:
    a1: float
    a2: float
    gamma: float
    alpha: float

    def __post_init__(self):
        if self.a2 <= 0.0 or self.a1 <= self.a2:
            raise ValueError(
                f"need a1 > a2 > 0, got a1={self.a1}, a2={self.a2}"
            )
        if not (0.0 < self.gamma <= 0.5):
            raise ValueError(f"need 0 < gamma <= 1/2, got {self.gamma}")
        if self.alpha < 0.0:
            raise ValueError(f"need alpha >= 0, got {self.alpha}")

    @property
    def mu(self) -> float:
        return self.a1 - self.a2

    @property
    def L(self) -> float:
        return 2.0 * self.a1

    @property
    def beta(self) -> float:
        return 1.0 - 2.0 * self.gamma


def iteration_matrix(inst: SharpnessInstance) -> np.ndarray:
    """Linear map of one step: mix, then local gradient steps."""
    g, al = inst.gamma, inst.alpha
    return np.array([
        [1.0 - g - 2.0 * al * inst.a1, g],
        [g, 1.0 - g + 2.0 * al * inst.a2],
    ])


def top_eigenvalue(inst: SharpnessInstance) -> float:
    """Largest eigenvalue, in closed form:
    ``(1 - gamma) + (a2 - a1) alpha + sqrt((a1 + a2)^2 alpha^2 + gamma^2)``.
    """
    g, al = inst.gamma, inst.alpha
    return ((1.0 - g) + (inst.a2 - inst.a1) * al
            + math.sqrt((inst.a1 + inst.a2) ** 2 * al * al + g * g))


def divergence_threshold(a1: float, a2: float, gamma: float) -> float:
    """Constant stepsize above which the iteration diverges (and below
    which it contracts): ``gamma (a1 - a2) / (2 a1 a2)``."""
    if a2 <= 0.0 or a1 <= a2:
        raise ValueError(f"need a1 > a2 > 0, got a1={a1}, a2={a2}")
    if not (0.0 < gamma <= 0.5):
        raise ValueError(f"need 0 < gamma <= 1/2, got {gamma}")
    return gamma * (a1 - a2) / (2.0 * a1 * a2)


def sharpness_ratio(mu: float, L: float, gamma: float):
    """Compare the exact divergence threshold with the general stepsize
    threshold on the calibrated family ``a1 = L/2``, ``a2 = L/2 - mu``.

    Returns ``(exact_threshold, general_threshold, ratio)`` where
    ratio -> 1 as L -> inf or mu -> 0; needs ``L > 2 mu`` so the second
    coefficient stays positive.
    """
    if mu <= 0.0:
        raise ValueError(f"need mu > 0, got {mu}")
    if L <= 2.0 * mu:
        raise HypothesisViolation(
            f"calibrated family needs L > 2 mu, got L={L}, mu={mu}"
        )
    if not (0.0 < gamma <= 0.5):
        raise ValueError(f"need 0 < gamma <= 1/2, got {gamma}")
    exact = 2.0 * mu * gamma / (L * (L - 2.0 * mu))
    e = eta(mu, L)
    beta = 1.0 - 2.0 * gamma
    general = e * (1.0 - beta) / (L * (e + L))
    return exact, general, general / exact
