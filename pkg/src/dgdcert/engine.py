"""Decentralized gradient descent simulator.

One iteration mixes neighbor states through the weight matrix and takes
a local gradient step:

    x_i(t+1) = sum_j w_ij x_j(t) - alpha(t) grad f_i(x_i(t))

The run loop tracks three error series: the disagreement
``||x - xbar||`` (Frobenius over stacked states), the stacked distance
of the average from the minimizer ``sqrt(m) ||xbar - x*||``, and the
total distance ``||x - x*||``. The first two are orthogonal components
of the third.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .network import MixingMatrix
from .objectives import CostEnsemble
from .schedules import StepsizeSchedule

DIVERGENCE_CAP = 1e12


@dataclass(frozen=True)
class AgentStates:
    """Stacked agent states (row i is agent i) at iteration t."""

    x: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.x.setflags(write=False)

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def mean(self) -> np.ndarray:
        return self.x.mean(axis=0)


def initial_states(m: int, dim: int, seed: int, low: float = 0.0,
                   high: float = 50.0) -> AgentStates:
    """Seeded uniform starting states, one row per agent."""
    rng = np.random.default_rng(seed)
    return AgentStates(x=rng.uniform(low, high, size=(m, dim)), t=0)


def consensus_error(x: np.ndarray) -> float:
    return float(np.linalg.norm(x - x.mean(axis=0)))

def mean_error(x: np.ndarray, x_star: np.ndarray) -> float:
    # stacked norm: sqrt(m) times the plain distance of the average
    return float(math.sqrt(x.shape[0]) * np.linalg.norm(x.mean(axis=0) - x_star))

def total_error(x: np.ndarray, x_star: np.ndarray) -> float:
    return float(np.linalg.norm(x - x_star[None, :]))


def dgd_step(s: AgentStates, mixing: MixingMatrix, e: CostEnsemble,
             alpha_t: float) -> AgentStates:
    """One simulator iteration. Non-finite outputs are returned as-is;
    the run loop is responsible for flagging divergence."""
    g = e.gradients(s.x)
    return AgentStates(x=mixing.w @ s.x - alpha_t * g, t=s.t + 1)


def average_dynamics_residual(s: AgentStates, s_next: AgentStates,
                              e: CostEnsemble, alpha_t: float) -> float:
    """How far the averages deviate from the exact reduced recursion
    ``xbar(t+1) = xbar(t) - (alpha / m) sum_i grad f_i(x_i)``."""
    predicted = s.mean() - (alpha_t / e.m) * e.gradients(s.x).sum(axis=0)
    return float(np.linalg.norm(s_next.mean() - predicted))


@dataclass(frozen=True)
class Trajectory:
    """Logged error series of one run."""

    logged_t: np.ndarray
    consensus_err: np.ndarray
    mean_err: np.ndarray
    total_err: np.ndarray
    status: str            # "completed" | "diverged"
    diverged_t: int | None
    final: AgentStates

    def status_dict(self) -> dict:
        return {
            "status": self.status,
            "diverged_t": self.diverged_t,
            "t_final": int(self.final.t),
            "n_logged": int(len(self.logged_t)),
        }


def _log_times(horizon: int, log_every, log_at) -> np.ndarray:
    if log_at is not None:
        ts = np.asarray(sorted(set(int(t) for t in log_at)), dtype=np.int64)
        if len(ts) == 0 or ts[0] < 0 or ts[-1] > horizon:
            raise ValueError("log_at entries must lie in [0, horizon]")
        return ts
    if log_every is None or log_every < 1:
        raise ValueError(f"need log_every >= 1, got {log_every}")
    ts = set(range(0, horizon + 1, int(log_every)))
    ts.add(horizon)
    ts.add(0)
    return np.asarray(sorted(ts), dtype=np.int64)


def run(mixing: MixingMatrix, e: CostEnsemble, s0: AgentStates,
        schedule: StepsizeSchedule, horizon: int, *,
        log_every: int | None = 1, log_at=None,
        divergence_cap: float = DIVERGENCE_CAP,
        record_all: bool = False) -> Trajectory:
    """Run the iteration for ``horizon`` steps from ``s0``.

    Parameters
    ----------
    log_every, log_at : logging grid. Either an even spacing or an
        explicit sorted list of iteration indices relative to ``s0.t``;
        0 and the horizon are always included. ``record_all`` overrides
        both and records every step (used by the per-step inequality
        checks).
    divergence_cap : the run stops and is flagged "diverged" as soon as
        the stacked state norm exceeds this cap or turns non-finite.

    Returns
    -------
    Trajectory with the error series at the logged iterations that were
    actually reached.
    """
    if horizon < 1:
        raise ValueError(f"need horizon >= 1, got {horizon}")
    if divergence_cap <= 0.0:
        raise ValueError(f"need divergence_cap > 0, got {divergence_cap}")
    if mixing.m != e.m:
        raise ValueError(
            f"mixing is for {mixing.m} agents but ensemble has {e.m}"
        )
    if s0.x.shape != (e.m, e.dim):
        raise ValueError(
            f"states have shape {s0.x.shape}, expected {(e.m, e.dim)}"
        )

    if record_all:
        rel_log = np.arange(horizon + 1, dtype=np.int64)
    else:
        rel_log = _log_times(horizon, log_every, log_at)
    to_log = np.zeros(horizon + 1, dtype=bool)
    to_log[rel_log] = True

    w = mixing.w
    x = np.array(s0.x, dtype=float)
    x_star = e.x_star
    alphas = schedule.alpha_array(s0.t + np.arange(horizon))
    cap_sq = divergence_cap * divergence_cap
    grads = e.gradients

    logged, cons, mean, tot = [], [], [], []

    def _record(step):
        logged.append(s0.t + step)
        cons.append(consensus_error(x))
        mean.append(mean_error(x, x_star))
        tot.append(total_error(x, x_star))

    if to_log[0]:
        _record(0)
    status, diverged_t, t_final = "completed", None, s0.t + horizon
    for k in range(horizon):
        g = grads(x)
        x = w @ x
        x -= alphas[k] * g
        nrm_sq = np.vdot(x, x).real
        if nrm_sq != nrm_sq or nrm_sq > cap_sq:
            status = "diverged"
            diverged_t = s0.t + k + 1
            t_final = diverged_t
            break
        if to_log[k + 1]:
            _record(k + 1)

    return Trajectory(
        logged_t=np.asarray(logged, dtype=np.int64),
        consensus_err=np.asarray(cons),
        mean_err=np.asarray(mean),
        total_err=np.asarray(tot),
        status=status,
        diverged_t=diverged_t,
        final=AgentStates(x=x, t=t_final),
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV with shortest round-trip float formatting (locale independent)."""
    lines = ["t,consensus_err,mean_err,total_err"]
    for i in range(len(traj.logged_t)):
        lines.append(
            f"{int(traj.logged_t[i])},{float(traj.consensus_err[i])!r},"
            f"{float(traj.mean_err[i])!r},{float(traj.total_err[i])!r}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_status_json(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        json.dump(traj.status_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
