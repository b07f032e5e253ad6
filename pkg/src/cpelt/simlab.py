"""Monte-Carlo lab: data generators, error laws and replication loops.

The generators reproduce the fixed-design experiments used throughout the
package's evaluation: covariate ``x_i = i / 1000`` (divisor configurable),
a two-phase mean for a single change, a three-phase mean returning to the
baseline parameter for the epidemic shape, and four standardized error
laws.  Replications are reproducible bit-for-bit: replication ``r`` draws
from a stream seeded by ``seed XOR splitmix64(r)``, so serial and parallel
runs tally identically.
"""
from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .epidemic import epidemic_scan
from .estimation import DataSet
from .eltest import scan
from .exceptions import CpeltError, ExperimentFailureError
from .lsbaseline import sup_f
from .model import ModelSpec, f_values, get_model
from .simseed import child_seed, splitmix64

__all__ = [
    "ErrorDistribution",
    "SimConfig",
    "SimReport",
    "sample_error",
    "sample_errors",
    "generate_one_change",
    "generate_epidemic",
    "run_replications",
    "summary_stats",
]

# Second-stage streams (initializer perturbation, bootstrap) are decoupled
# from the data stream by fixed xor constants.
_AUX_SALT = 0xA5A5A5A55A5A5A5A
_BOOT_SALT = 0xC3C3C3C33C3C3C3C


class ErrorDistribution(enum.Enum):
    """Standardized error laws (mean 0, variance 1 by construction)."""

    NORMAL = "normal"
    EXPONENTIAL = "exponential"
    CHI_SQUARED = "chi2"
    STUDENT = "student"


def sample_errors(dist: ErrorDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` standardized errors.

    Transforms: exponential is 2 X - 1 with X = -ln(U)/2; chi-squared sums
    three squared normals then centers and scales by sqrt(6); Student is a
    normal over sqrt(chi2(6)/6), scaled by 2/sqrt(6).
    """
    if dist is ErrorDistribution.NORMAL:
        return rng.standard_normal(size)
    if dist is ErrorDistribution.EXPONENTIAL:
        u = np.maximum(rng.random(size), np.finfo(float).tiny)
        x = -np.log(u) / 2.0
        return 2.0 * x - 1.0
    if dist is ErrorDistribution.CHI_SQUARED:
        z = rng.standard_normal((size, 3))
        return ((z * z).sum(axis=1) - 3.0) / np.sqrt(6.0)
    if dist is ErrorDistribution.STUDENT:
        z = rng.standard_normal(size)
        w = rng.standard_normal((size, 6))
        chi6 = np.maximum((w * w).sum(axis=1), np.finfo(float).tiny)
        return (2.0 / np.sqrt(6.0)) * z / np.sqrt(chi6 / 6.0)
    raise ValueError(f"unknown error distribution {dist!r}")


def sample_error(dist: ErrorDistribution, rng: np.random.Generator) -> float:
    """One standardized error draw."""
    return float(sample_errors(dist, rng, 1)[0])


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo scenario.

    Exactly one shape applies: ``scenario="single"`` with ``k0`` set (or
    ``k0=None`` for no change), or ``scenario="epidemic"`` with ``k1 < k2``
    (both ``None`` for no change).  ``noise_sd`` scales the standardized
    errors; 0 disables noise (a test hook for checking the generators).
    """

    n: int
    beta1: tuple[float, ...]
    beta2: tuple[float, ...] | None = None
    scenario: str = "single"
    k0: int | None = None
    k1: int | None = None
    k2: int | None = None
    model: str = "ratio_power"
    dist: ErrorDistribution = ErrorDistribution.NORMAL
    reps: int = 100
    alpha: float = 0.05
    seed: int = 0
    x_divisor: float = 1000.0
    noise_sd: float = 1.0
    bootstrap_reps: int = 200

    def __post_init__(self):
        if self.scenario not in ("single", "epidemic"):
            raise ValueError("scenario must be 'single' or 'epidemic'")
        if self.scenario == "single":
            if self.k1 is not None or self.k2 is not None:
                raise ValueError("single scenario must not set k1/k2")
            if self.k0 is not None and not (1 < self.k0 < self.n):
                raise ValueError("k0 must lie strictly inside (1, n)")
            if self.k0 is not None and self.beta2 is None:
                raise ValueError("a change needs beta2")
        else:
            if self.k0 is not None:
                raise ValueError("epidemic scenario must not set k0")
            if (self.k1 is None) != (self.k2 is None):
                raise ValueError("set both k1 and k2 or neither")
            if self.k1 is not None:
                if not (1 < self.k1 <= self.k2 < self.n):
                    raise ValueError("need 1 < k1 <= k2 < n")
                if self.beta2 is None:
                    raise ValueError("a change needs beta2")
        if self.beta2 is not None and len(self.beta2) != len(self.beta1):
            raise ValueError("beta1 and beta2 must have equal length")
        if self.model == "linear" and len(self.beta1) != 1:
            raise ValueError(
                "the simulation design is a scalar trend; linear scenarios "
                "take a single coefficient"
            )
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def model_spec(self) -> ModelSpec:
        return get_model(self.model, dim_x=1 if self.model == "ratio_power" else len(self.beta1))

    def design(self) -> np.ndarray:
        i = np.arange(1, self.n + 1, dtype=float)
        return (i / self.x_divisor)[:, None]


def _make_dataset(cfg: SimConfig, mean: np.ndarray, rep_index: int) -> DataSet:
    rng = np.random.default_rng(child_seed(cfg.seed, rep_index))
    eps = sample_errors(cfg.dist, rng, cfg.n) * cfg.noise_sd
    return DataSet(x=cfg.design(), y=mean + eps)


def generate_one_change(cfg: SimConfig, rep_index: int) -> DataSet:
    """Two-phase dataset (or pure no-change data when ``k0`` is absent)."""
    if cfg.scenario != "single":
        raise ValueError("config is not a single-change scenario")
    spec = cfg.model_spec()
    x = cfg.design()
    mean1 = f_values(spec, x, np.asarray(cfg.beta1, dtype=float))
    if cfg.k0 is None:
        mean = mean1
    else:
        mean2 = f_values(spec, x, np.asarray(cfg.beta2, dtype=float))
        idx = np.arange(1, cfg.n + 1)
        mean = np.where(idx <= cfg.k0, mean1, mean2)
    return _make_dataset(cfg, mean, rep_index)


def generate_epidemic(cfg: SimConfig, rep_index: int) -> DataSet:
    """Three-phase dataset: baseline, departure on (k1, k2], return."""
    if cfg.scenario != "epidemic":
        raise ValueError("config is not an epidemic scenario")
    spec = cfg.model_spec()
    x = cfg.design()
    mean1 = f_values(spec, x, np.asarray(cfg.beta1, dtype=float))
    if cfg.k1 is None or cfg.k1 == cfg.k2:
        mean = mean1
    else:
        mean2 = f_values(spec, x, np.asarray(cfg.beta2, dtype=float))
        idx = np.arange(1, cfg.n + 1)
        mean = np.where((idx > cfg.k1) & (idx <= cfg.k2), mean2, mean1)
    return _make_dataset(cfg, mean, rep_index)


def summary_stats(values) -> dict[str, float]:
    """min/max/mean/sd/median in one dict (sorted first for determinism)."""
    arr = np.sort(np.asarray(values, dtype=float))
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {
        "min": float(arr[0]),
        "max": float(arr[-1]),
        "mean": float(arr.mean()),
        "sd": sd,
        "median": float(np.median(arr)),
    }


@dataclass(frozen=True)
class SimReport:
    """Aggregated Monte-Carlo outcome for one scenario and detector."""

    detector: str
    rejections: int
    reps_done: int
    empirical_rate: float
    khat_summaries: dict[str, dict[str, float]]
    failures: int
    wall_time_s: float
    per_rep: list[dict] = field(repr=False)


def _perturbed_init(cfg: SimConfig, spec: ModelSpec, rep_index: int) -> np.ndarray:
    rng = np.random.default_rng(splitmix64(child_seed(cfg.seed, rep_index) ^ _AUX_SALT))
    beta1 = np.asarray(cfg.beta1, dtype=float)
    jitter = 0.05 * np.maximum(1.0, np.abs(beta1)) * rng.standard_normal(beta1.size)
    return spec.domain.clip(beta1 + jitter)


def _run_one(cfg: SimConfig, detector: str, rep_index: int) -> dict:
    """One replication: generate, detect, record.  Worker for the pool."""
    spec = cfg.model_spec()
    record: dict = {"rep": rep_index, "failed": False, "reject": False}
    try:
        if detector == "epidemic":
            data = generate_epidemic(cfg, rep_index)
        else:
            data = generate_one_change(cfg, rep_index)
        init = _perturbed_init(cfg, spec, rep_index)
        if detector == "el":
            res = scan(data, spec, alpha=cfg.alpha, init=init)
            record.update(reject=res.reject, k_hat=res.k_hat, t_max=res.t_max)
        elif detector == "supf":
            res = sup_f(data, spec, init=init)
            record.update(reject=res.reject, k_hat=res.k_at_max, t_max=res.f_max)
        elif detector == "epidemic":
            boot_seed = splitmix64(child_seed(cfg.seed, rep_index) ^ _BOOT_SALT)
            res = epidemic_scan(
                data,
                spec,
                alpha=cfg.alpha,
                bootstrap_reps=cfg.bootstrap_reps,
                seed=boot_seed,
                init=init,
            )
            record.update(
                reject=res.reject,
                k1_hat=res.k1_hat,
                k2_hat=res.k2_hat,
                t_max=res.stat_max,
            )
        else:
            raise ValueError(f"unknown detector {detector!r}")
    except CpeltError as exc:
        record["failed"] = True
        record["error"] = type(exc).__name__
    return record


def run_replications(cfg: SimConfig, detector: str = "el", n_jobs: int = 1) -> SimReport:
    """Run the full replication loop for one scenario.

    Failed replications stay in the denominator except for the "supf"
    baseline, whose failures are excluded (they mirror the splits the
    baseline cannot handle).  More than 50% failures aborts the experiment.
    """
    if detector not in ("el", "supf", "epidemic"):
        raise ValueError(f"unknown detector {detector!r}")
    start = time.perf_counter()
    indices = range(cfg.reps)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_one, [cfg] * cfg.reps, [detector] * cfg.reps, indices))
    else:
        records = [_run_one(cfg, detector, r) for r in indices]
    records.sort(key=lambda rec: rec["rep"])

    failures = sum(rec["failed"] for rec in records)
    if failures > 0.5 * cfg.reps:
        raise ExperimentFailureError(f"{failures}/{cfg.reps} replications failed")
    usable = [rec for rec in records if not rec["failed"]]
    reps_done = len(usable) if detector == "supf" else cfg.reps
    rejections = sum(rec["reject"] for rec in usable)

    change_simulated = (cfg.scenario == "single" and cfg.k0 is not None) or (
        cfg.scenario == "epidemic" and cfg.k1 is not None and cfg.k1 != cfg.k2
    )
    khat_summaries: dict[str, dict[str, float]] = {}
    if change_simulated and usable:
        if detector == "epidemic":
            khat_summaries["k1"] = summary_stats([rec["k1_hat"] for rec in usable])
            khat_summaries["k2"] = summary_stats([rec["k2_hat"] for rec in usable])
        else:
            khat_summaries["k"] = summary_stats([rec["k_hat"] for rec in usable])

    return SimReport(
        detector=detector,
        rejections=int(rejections),
        reps_done=reps_done,
        empirical_rate=rejections / reps_done if reps_done else 0.0,
        khat_summaries=khat_summaries,
        failures=int(failures),
        wall_time_s=time.perf_counter() - start,
        per_rep=records,
    )
