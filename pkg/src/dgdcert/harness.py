"""Experiment harness: configs, runners, and figure sweeps.

A JSON config fully determines a run; all randomness flows from one
master seed expanded per component (ensemble, graph, initial states),
so reruns are byte-identical. Output files are written atomically
(temp file + rename).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from . import certificates as certs
from . import engine
from .errors import EstimateUnavailable
from .network import build_graph, metropolis_weights, two_agent_matrix, \
    validate_mixing
from .objectives import eta, quadratic_pair, random_least_squares
from .rng import component_seed
from .schedules import StepsizeSchedule, check_schedule, \
    constant_schedule, polynomial_schedule
from .sharpness import SharpnessInstance, divergence_threshold, \
    iteration_matrix, sharpness_ratio, top_eigenvalue

DEFAULT_HORIZON_FIGURE1 = 10**5
DEFAULT_HORIZON_FIGURE2 = 10**4

# Exponents and stepsize scales of the diminishing-schedule sweep.
FIGURE1_EXPONENTS = (0.25, 0.5, 0.75, 1.0)

# Constant-stepsize sweep around the two-agent bifurcation, written as
# alpha = gamma (a1 + a2) / (k a1 a2) for these k.
FIGURE2_K = (2.1, 2.01, 2.0, 1.99, 1.9)
FIGURE2_A1 = 10.0
FIGURE2_A2 = 6.0
FIGURE2_GAMMA = 0.2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulator run, JSON-serializable and self-contained."""

    seed: int
    ensemble: dict
    graph: dict
    schedule: dict
    horizon: int
    log: dict = field(default_factory=lambda: {"kind": "geometric"})
    certificates: bool = True
    divergence_cap: float = engine.DIVERGENCE_CAP
    init: dict = field(default_factory=lambda: {"low": 0.0, "high": 50.0})
    expect_divergence: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "ensemble": self.ensemble,
            "graph": self.graph,
            "schedule": self.schedule,
            "horizon": self.horizon,
            "log": self.log,
            "certificates": self.certificates,
            "divergence_cap": self.divergence_cap,
            "init": self.init,
            "expect_divergence": self.expect_divergence,
        }, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        data = json.loads(text)
        known = {
            "seed", "ensemble", "graph", "schedule", "horizon", "log",
            "certificates", "divergence_cap", "init", "expect_divergence",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"seed", "ensemble", "graph", "schedule", "horizon"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return ExperimentConfig(
            seed=int(data["seed"]),
            ensemble=dict(data["ensemble"]),
            graph=dict(data["graph"]),
            schedule=dict(data["schedule"]),
            horizon=int(data["horizon"]),
            log=dict(data.get("log", {"kind": "geometric"})),
            certificates=bool(data.get("certificates", True)),
            divergence_cap=float(
                data.get("divergence_cap", engine.DIVERGENCE_CAP)),
            init=dict(data.get("init", {"low": 0.0, "high": 50.0})),
            expect_divergence=bool(data.get("expect_divergence", False)),
        )

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path) as fh:
            return ExperimentConfig.from_json(fh.read())

    def save(self, path) -> None:
        _atomic_write(path, self.to_json() + "\n")


def build_ensemble(cfg: ExperimentConfig):
    spec = dict(cfg.ensemble)
    kind = spec.pop("kind", None)
    if kind == "least_squares":
        return random_least_squares(
            m=int(spec.pop("m", 10)),
            n=int(spec.pop("n", 5)),
            dim=int(spec.pop("dim", 3)),
            noise_sigma=float(spec.pop("noise_sigma", 0.1)),
            seed=component_seed(cfg.seed, "ensemble"),
        )
    if kind == "quadratic_pair":
        return quadratic_pair(float(spec.pop("a1")), float(spec.pop("a2")))
    raise ConfigError(f"unknown ensemble kind: {kind!r}")


def build_mixing(cfg: ExperimentConfig):
    spec = dict(cfg.graph)
    kind = spec.pop("kind", None)
    if kind == "two_agent":
        return two_agent_matrix(float(spec.pop("gamma")))
    if kind in ("ring", "path", "complete", "erdos_renyi"):
        g = build_graph(
            kind, int(spec.pop("m")),
            q=float(spec["q"]) if "q" in spec else None,
            seed=component_seed(cfg.seed, "graph"),
        )
        return metropolis_weights(g)
    raise ConfigError(f"unknown graph kind: {kind!r}")


def build_schedule(cfg: ExperimentConfig) -> StepsizeSchedule:
    spec = dict(cfg.schedule)
    kind = spec.get("kind")
    if kind == "polynomial":
        return polynomial_schedule(float(spec["a"]), float(spec["w"]),
                                   float(spec["p"]))
    if kind == "constant":
        return constant_schedule(float(spec["alpha"]))
    raise ConfigError(f"unknown schedule kind: {kind!r}")


def geometric_log_times(horizon: int) -> list:
    """Near-geometric grid {floor(10^(k/20))} capped at the horizon,
    deduplicated, with 0 and the horizon always present."""
    ts = {0, horizon}
    k = 0
    while True:
        t = math.floor(10.0 ** (k / 20.0))
        if t > horizon:
            break
        ts.add(t)
        k += 1
    return sorted(ts)


def log_times_from_config(cfg: ExperimentConfig) -> list:
    spec = dict(cfg.log)
    kind = spec.get("kind", "geometric")
    if kind == "geometric":
        return geometric_log_times(cfg.horizon)
    if kind == "every":
        step = int(spec.get("step", 1))
        ts = sorted(set(range(0, cfg.horizon + 1, step)) | {0, cfg.horizon})
        return ts
    if kind == "explicit":
        return sorted({0, cfg.horizon} | {int(t) for t in spec["times"]})
    raise ConfigError(f"unknown log kind: {kind!r}")


@dataclass(frozen=True)
class SlopeEstimate:
    """Least-squares slope of log10(value) against log10(t)."""

    slope: float
    intercept: float
    t_lo: float
    t_hi: float
    n_points: int
    residual_rms: float

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept,
            "t_lo": self.t_lo, "t_hi": self.t_hi,
            "n_points": self.n_points, "residual_rms": self.residual_rms,
        }


def tail_slope(ts, values, window_fraction: float = 0.3) -> SlopeEstimate:
    """Fit the decay exponent over the last ``window_fraction`` of the
    logarithmic time range. Needs at least 10 strictly positive points
    in the window."""
    if not (0.0 < window_fraction <= 1.0):
        raise ValueError(
            f"need window_fraction in (0, 1], got {window_fraction}")
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    pos_t = ts > 0.0
    if not np.any(pos_t):
        raise EstimateUnavailable("no positive times to fit")
    log_t = np.log10(ts[pos_t])
    vals = values[pos_t]
    lo = log_t.max() - window_fraction * (log_t.max() - log_t.min())
    in_window = log_t >= lo - 1e-12
    vals_w = vals[in_window]
    log_t_w = log_t[in_window]
    if np.any(vals_w <= 0.0):
        raise EstimateUnavailable(
            "window contains non-positive values; no log fit")
    if len(vals_w) < 10:
        raise EstimateUnavailable(
            f"only {len(vals_w)} points in fit window, need >= 10")
    log_v = np.log10(vals_w)
    slope, intercept = np.polyfit(log_t_w, log_v, 1)
    resid = log_v - (slope * log_t_w + intercept)
    return SlopeEstimate(
        slope=float(slope), intercept=float(intercept),
        t_lo=float(10.0 ** log_t_w.min()), t_hi=float(10.0 ** log_t_w.max()),
        n_points=int(len(vals_w)),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
    )


def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, data: dict) -> None:
    _atomic_write(path, json.dumps(data, sort_keys=True, indent=2) + "\n")


def write_trajectory_csv(traj: engine.Trajectory, path) -> None:
    lines = ["t,consensus_err,mean_err,total_err"]
    for i in range(len(traj.logged_t)):
        lines.append(
            f"{int(traj.logged_t[i])},{float(traj.consensus_err[i])!r},"
            f"{float(traj.mean_err[i])!r},{float(traj.total_err[i])!r}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_certificate_csv(cert: certs.BoundCertificate, path) -> None:
    names = sorted(cert.components)
    lines = ["t,envelope" + "".join("," + n for n in names)]
    for i in range(len(cert.ts)):
        row = f"{int(cert.ts[i])},{float(cert.values[i])!r}"
        for n in names:
            row += f",{float(cert.components[n][i])!r}"
        lines.append(row)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv; returns (ts, cons, mean, total)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["t", "consensus_err", "mean_err", "total_err"]:
            raise ValueError(f"unexpected trajectory header: {header}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    ts = np.array([int(r[0]) for r in rows], dtype=np.int64)
    cols = [np.array([float(r[i]) for r in rows]) for i in (1, 2, 3)]
    return ts, cols[0], cols[1], cols[2]


def cmd_run(cfg: ExperimentConfig, out_dir, *,
            no_certificates: bool = False) -> dict:
    """Execute one configured run; writes trajectory.csv, summary.json
    and (when requested and available) certificate CSVs. Returns the
    summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    e = build_ensemble(cfg)
    mixing = build_mixing(cfg)
    if mixing.m != e.m:
        raise ConfigError(
            f"graph has {mixing.m} nodes but ensemble has {e.m} agents")
    schedule = build_schedule(cfg)
    report = check_schedule(schedule, e.mu, e.L, mixing.beta)
    want_certs = cfg.certificates and not no_certificates
    if want_certs and not report.admissible_strict:
        raise ConfigError(
            "certificates requested but the schedule is not strictly "
            f"admissible: alpha0={report.alpha0:.6e} vs consensus "
            f"threshold {report.bound_consensus:.6e} (smoothness "
            f"threshold {report.bound_smooth:.6e}); rerun with "
            "--no-certificates or lower the stepsize"
        )

    s0 = engine.initial_states(
        e.m, e.dim, component_seed(cfg.seed, "init"),
        low=float(cfg.init.get("low", 0.0)),
        high=float(cfg.init.get("high", 50.0)),
    )
    traj = engine.run(
        mixing, e, s0, schedule, cfg.horizon,
        log_at=log_times_from_config(cfg),
        divergence_cap=cfg.divergence_cap,
    )
    write_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))

    summary = {
        "config": json.loads(cfg.to_json()),
        "m": e.m,
        "dim": e.dim,
        "mu": e.mu,
        "L": e.L,
        "eta": eta(e.mu, e.L),
        "beta": mixing.beta,
        "D": e.D,
        "admissibility": report.to_dict(),
        "schedule": json.loads(schedule.to_json()),
        "gaps": {
            "mean": engine.mean_error(s0.x, e.x_star),
            "consensus": engine.consensus_error(s0.x),
            "total": engine.total_error(s0.x, e.x_star),
        },
        "status": traj.status,
        "diverged_t": traj.diverged_t,
        "horizon": cfg.horizon,
        "files": {"trajectory": "trajectory.csv"},
        "R": None,
        "constants": None,
    }

    if want_certs:
        pc = certs.problem_constants(e, mixing, schedule, s0.x)
        summary["R"] = pc.R
        summary["constants"] = pc.to_dict()
        cert_files = _write_certificates(pc, traj, out_dir)
        summary["files"].update(cert_files)

    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def _write_certificates(pc: certs.ProblemConstants, traj: engine.Trajectory,
                        out_dir) -> dict:
    files = {}
    ts = [int(t) for t in traj.logged_t]
    cons_cert = certs.evaluate_certificate("consensus", pc, ts)
    write_certificate_csv(
        cons_cert, os.path.join(out_dir, "certificate_consensus.csv"))
    files["certificate_consensus"] = "certificate_consensus.csv"
    rate_available = pc.schedule.is_polynomial and (
        pc.p < 1.0 or pc.a > 2.0 / pc.eta)
    if rate_available:
        rate_cert = certs.evaluate_certificate("rate", pc, ts)
        write_certificate_csv(
            rate_cert, os.path.join(out_dir, "certificate_rate.csv"))
        files["certificate_rate"] = "certificate_rate.csv"
    return files


def cmd_certify(run_dir) -> dict:
    """Re-evaluate the envelopes for a stored run and report pointwise
    domination of the logged errors."""
    with open(os.path.join(run_dir, "summary.json")) as fh:
        summary = json.load(fh)
    cfg = ExperimentConfig.from_json(json.dumps(summary["config"]))
    e = build_ensemble(cfg)
    mixing = build_mixing(cfg)
    schedule = build_schedule(cfg)
    ts, cons_err, mean_err, _ = read_trajectory_csv(
        os.path.join(run_dir, "trajectory.csv"))
    s0 = engine.initial_states(
        e.m, e.dim, component_seed(cfg.seed, "init"),
        low=float(cfg.init.get("low", 0.0)),
        high=float(cfg.init.get("high", 50.0)),
    )
    pc = certs.problem_constants(e, mixing, schedule, s0.x)
    cert_files = {}
    cons_cert = certs.evaluate_certificate("consensus", pc, ts)
    write_certificate_csv(
        cons_cert, os.path.join(run_dir, "certificate_consensus.csv"))
    cert_files["certificate_consensus"] = "certificate_consensus.csv"
    result = {
        "R": pc.R,
        "constants": pc.to_dict(),
        "consensus_dominates": bool(
            np.all(cons_cert.values >= cons_err - 1e-9)),
        "uniform_mean_ok": bool(np.all(mean_err <= pc.R * (1.0 + 1e-9))),
        "uniform_consensus_ok": bool(np.all(
            cons_err <= pc.eta * pc.R / pc.L * (1.0 + 1e-9))),
        "files": cert_files,
    }
    if pc.schedule.is_polynomial and (pc.p < 1.0 or pc.a > 2.0 / pc.eta):
        rate_cert = certs.evaluate_certificate("rate", pc, ts)
        write_certificate_csv(
            rate_cert, os.path.join(run_dir, "certificate_rate.csv"))
        cert_files["certificate_rate"] = "certificate_rate.csv"
        result["rate_kind"] = rate_cert.kind
        result["rate_dominates"] = bool(
            np.all(rate_cert.values >= mean_err - 1e-9))
    _write_json(os.path.join(run_dir, "certify.json"), result)
    return result


def figure1_schedules(mu: float, L: float, beta: float) -> dict:
    """Stepsize families of the diminishing-schedule sweep.

    The pivot ``Z = 16 L (eta + L) / (mu eta (1 - beta))`` sets
    ``w = Z^(1/p)``; the four scales then put alpha(0) at 1/5 and 1/50
    of the smoothness scale ``1/(mu+L)`` and at 1/1.1 and 1/2 of the
    consensus threshold. Returns {p: {label: schedule}} plus the pivot
    under key "Z".
    """
    et = eta(mu, L)
    z = 16.0 * L * (et + L) / (mu * et * (1.0 - beta))
    out = {"Z": z, "panels": {}}
    for p in FIGURE1_EXPONENTS:
        w = z ** (1.0 / p)
        wp = w ** p
        scales = {
            "a1": wp / (5.0 * (mu + L)),
            "a2": wp / (50.0 * (mu + L)),
            "a3": et * (1.0 - beta) * wp / (1.1 * L * (et + L)),
            "a4": et * (1.0 - beta) * wp / (2.0 * L * (et + L)),
        }
        out["panels"][p] = {
            label: polynomial_schedule(a, w, p) for label, a in scales.items()
        }
    return out


def cmd_figure1(out_dir, *, seed: int = 20260821,
                horizon: int = DEFAULT_HORIZON_FIGURE1,
                ensemble_spec: dict | None = None,
                graph_spec: dict | None = None) -> dict:
    """Sweep the four stepsize scales over the four exponents on one
    random regression instance. Panels with stepsizes above the
    consensus threshold run without certificates (they are part of the
    sweep on purpose). Writes one CSV per (p, scale) and a summary."""
    os.makedirs(out_dir, exist_ok=True)
    cfg0 = ExperimentConfig(
        seed=seed,
        ensemble=ensemble_spec or {
            "kind": "least_squares", "m": 10, "n": 5, "dim": 3,
            "noise_sigma": 0.1,
        },
        graph=graph_spec or {"kind": "ring", "m": 10},
        schedule={"kind": "constant", "alpha": 1.0},  # placeholder
        horizon=horizon,
    )
    e = build_ensemble(cfg0)
    mixing = build_mixing(cfg0)
    et = eta(e.mu, e.L)
    sweep = figure1_schedules(e.mu, e.L, mixing.beta)
    s0 = engine.initial_states(
        e.m, e.dim, component_seed(seed, "init"))
    log_ts = geometric_log_times(horizon)

    summary = {
        "mu": e.mu, "L": e.L, "eta": et, "beta": mixing.beta,
        "D": e.D, "Z": sweep["Z"], "horizon": horizon, "seed": seed,
        "panels": {},
    }
    for p, schedules in sweep["panels"].items():
        panel = {}
        for label, sched in schedules.items():
            traj = engine.run(mixing, e, s0, sched, horizon, log_at=log_ts)
            name = f"fig1_p{p:g}_{label}.csv"
            write_trajectory_csv(traj, os.path.join(out_dir, name))
            entry = {
                "a": sched.a, "w": sched.w, "p": sched.p,
                "alpha0": sched.alpha0,
                "admissible_strict": check_schedule(
                    sched, e.mu, e.L, mixing.beta).admissible_strict,
                "status": traj.status,
                "file": name,
            }
            try:
                entry["tail_slope"] = tail_slope(
                    traj.logged_t, traj.mean_err,
                    window_fraction=0.25).to_dict()
            except EstimateUnavailable as exc:
                entry["tail_slope"] = str(exc)
            panel[label] = entry
        summary["panels"][f"p={p:g}"] = panel
    _write_json(os.path.join(out_dir, "figure1.json"), summary)
    return summary


def cmd_figure2(out_dir, *, seed: int = 20260821,
                horizon: int = DEFAULT_HORIZON_FIGURE2) -> dict:
    """Constant-stepsize sweep across the two-agent bifurcation.

    Each stepsize carries an eigenvalue verdict from the closed-form
    spectrum; the observed run status must match it. Divergence here is
    expected behavior, not an error."""
    os.makedirs(out_dir, exist_ok=True)
    a1, a2, gamma = FIGURE2_A1, FIGURE2_A2, FIGURE2_GAMMA
    e = quadratic_pair(a1, a2)
    mixing = two_agent_matrix(gamma)
    s0 = engine.initial_states(2, 1, component_seed(seed, "init"))
    threshold = divergence_threshold(a1, a2, gamma)
    summary = {
        "a1": a1, "a2": a2, "gamma": gamma,
        "divergence_threshold": threshold,
        "seed": seed, "horizon": horizon, "runs": [],
    }
    for k in FIGURE2_K:
        alpha = gamma * (a1 + a2) / (k * a1 * a2)
        inst = SharpnessInstance(a1=a1, a2=a2, gamma=gamma, alpha=alpha)
        lam = top_eigenvalue(inst)
        traj = engine.run(
            mixing, e, s0, constant_schedule(alpha), horizon,
            log_at=geometric_log_times(horizon),
        )
        name = f"fig2_k{k:g}.csv"
        write_trajectory_csv(traj, os.path.join(out_dir, name))
        summary["runs"].append({
            "k": k,
            "alpha": alpha,
            "top_eigenvalue": lam,
            "predicted": "diverge" if lam > 1.0 else "converge",
            "above_threshold": alpha > threshold,
            "status": traj.status,
            "diverged_t": traj.diverged_t,
            "file": name,
            "consistent": (lam > 1.0) == (traj.status == "diverged"),
        })
    _write_json(os.path.join(out_dir, "figure2.json"), summary)
    return summary


def cmd_sharpness(a1: float, a2: float, gamma: float,
                  alpha: float | None = None) -> dict:
    """Threshold report for a two-agent instance; includes the iteration
    matrix and eigenvalue when a stepsize is supplied."""
    out = {
        "a1": a1, "a2": a2, "gamma": gamma,
        "divergence_threshold": divergence_threshold(a1, a2, gamma),
    }
    mu, L = a1 - a2, 2.0 * a1
    if L > 2.0 * mu:
        exact, general, ratio = sharpness_ratio(mu, L, gamma)
        out["calibrated"] = {
            "mu": mu, "L": L, "exact_threshold": exact,
            "general_threshold": general, "ratio": ratio,
        }
    if alpha is not None:
        inst = SharpnessInstance(a1=a1, a2=a2, gamma=gamma, alpha=alpha)
        lam = top_eigenvalue(inst)
        out["alpha"] = alpha
        out["iteration_matrix"] = iteration_matrix(inst).tolist()
        out["top_eigenvalue"] = lam
        out["predicted"] = "diverge" if lam > 1.0 else "converge"
    return out


def cmd_validate(cfg: ExperimentConfig) -> dict:
    """Build every component of a config and report the mixing-matrix
    validation plus schedule admissibility."""
    e = build_ensemble(cfg)
    mixing = build_mixing(cfg)
    if mixing.m != e.m:
        raise ConfigError(
            f"graph has {mixing.m} nodes but ensemble has {e.m} agents")
    schedule = build_schedule(cfg)
    report = check_schedule(schedule, e.mu, e.L, mixing.beta)
    if cfg.certificates and not report.admissible_strict:
        raise ConfigError(
            "config requests certificates but alpha0="
            f"{report.alpha0:.6e} is not strictly below the consensus "
            f"threshold {report.bound_consensus:.6e}"
        )
    return {
        "mixing": validate_mixing(mixing).to_dict(),
        "beta": mixing.beta,
        "mu": e.mu,
        "L": e.L,
        "eta": eta(e.mu, e.L),
        "D": e.D,
        "admissibility": report.to_dict(),
        "log_points": len(log_times_from_config(cfg)),
    }
