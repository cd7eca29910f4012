"""Search loop: Sobol initialization, GP fit, acquisition, early stop.

The objective is a black box from the unit hypercube to a score
breakdown. After an initial quasi-random batch, each step fits the GP
surrogate to everything observed so far, proposes the point with the
highest expected improvement, and evaluates it. The loop stops at the
evaluation budget or after a fixed number of evaluations without
meaningful improvement.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .errors import OptimizationAborted
from .gp import GpModel, condition_gp, fit_gp
from .params import NUM_PARAMS, as_unit_vector
from .scoring import ScoreBreakdown

TRACE_SCHEMA_VERSION = 1
_IMPROVEMENT_TOL = 1e-6
_MAX_CONSECUTIVE_FAILURES = 10
# refitting hyperparameters is cubic in the observation count; past this
# many observations the fit is reused for a few iterations
_REFIT_EVERY_AFTER = 50
_REFIT_STRIDE = 5
_HILL_CLIMB_SIGMA = 0.05


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int = 100
    patience: int = 30
    init_samples: int = 20
    acq_candidates: int = 2048
    acq_refine_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 1 <= self.init_samples < self.max_iterations:
            raise ValueError("init_samples must satisfy 1 <= init_samples < max_iterations")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.acq_candidates < 1 or self.acq_refine_steps < 0:
            raise ValueError("acquisition settings must be positive")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "patience": self.patience,
            "init_samples": self.init_samples,
            "acq_candidates": self.acq_candidates,
            "acq_refine_steps": self.acq_refine_steps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Observation:
    """One scored evaluation; iteration numbers are strictly increasing."""

    x: np.ndarray
    score: ScoreBreakdown
    iteration: int
    wall_time_ms: float

    def __post_init__(self):
        object.__setattr__(self, "x", as_unit_vector(self.x))


@dataclass(frozen=True)
class SearchResult:
    best_x: np.ndarray
    best_score: ScoreBreakdown
    trace: tuple
    stop_reason: str  # "max_iterations" | "patience"
    n_evaluations: int
    n_failures: int


def expected_improvement(mu, sigma, best):
    """EI under a Normal(mu, sigma^2) posterior against an incumbent.

    Vectorized over mu/sigma. sigma == 0 degenerates to
    max(mu - best, 0).
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    improvement = mu - best
    positive = sigma > 0.0
    safe_sigma = np.where(positive, sigma, 1.0)
    z = improvement / safe_sigma
    phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    ei = improvement * ndtr(z) + sigma * phi
    ei = np.where(positive, ei, np.maximum(improvement, 0.0))
    if ei.ndim == 0:
        return float(ei)
    return ei


def _sobol_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """n scrambled Sobol points in [0,1]^26 (drawn as the next power of 2)."""
    sampler = qmc.Sobol(d=NUM_PARAMS, scramble=True, seed=rng)
    m = max(1, int(np.ceil(np.log2(n))))
    return sampler.random_base2(m)[:n]


def propose_next(model: GpModel, best_y: float, rng: np.random.Generator,
                 n_candidates: int = 2048, refine_steps: int = 50) -> np.ndarray:
    """Maximize EI: Sobol scan, then single-coordinate Gaussian hill climb.

    The climb picks its coordinate with probability proportional to the
    inverse ARD lengthscale, so refinement steps go to the dimensions
    the surrogate considers relevant instead of being spread evenly
    over all 26.
    """
    candidates = _sobol_points(n_candidates, rng)
    mu, sigma = model.predict(candidates)
    ei = expected_improvement(mu, sigma, best_y)
    x = candidates[int(np.argmax(ei))].copy()
    best_ei = float(ei[int(np.argmax(ei))])

    relevance = 1.0 / np.asarray(model.lengthscales, dtype=np.float64)
    coord_probs = relevance / relevance.sum()
    for _ in range(refine_steps):
        coord = int(rng.choice(NUM_PARAMS, p=coord_probs))
        step = rng.normal(0.0, _HILL_CLIMB_SIGMA)
        trial = x.copy()
        trial[coord] = min(1.0, max(0.0, trial[coord] + step))
        mu_t, sigma_t = model.predict(trial)
        ei_t = expected_improvement(mu_t, sigma_t, best_y)
        if ei_t > best_ei:
            x = trial
            best_ei = ei_t
    return as_unit_vector(x)


def optimize(objective, config: SearchConfig) -> SearchResult:
    """Run the full search; objective maps a unit vector to a ScoreBreakdown.

    An objective failure on a candidate consumes budget but is not
    scored; more than 10 consecutive failures abort the run. Patience
    counts every scored evaluation, including the initial batch.
    """
    seed_seq = np.random.SeedSequence(config.seed)
    init_ss, acq_ss = seed_seq.spawn(2)
    acq_rng = np.random.default_rng(acq_ss)

    init_points = _sobol_points(config.init_samples, np.random.default_rng(init_ss))

    trace: list = []
    xs: list = []
    ys: list = []
    best_idx = -1
    best_final = -np.inf
    stale_streak = 0
    consecutive_failures = 0
    n_evaluations = 0
    n_failures = 0
    stop_reason = "max_iterations"
    model: GpModel | None = None
    last_fit_count = 0
    last_data_count = 0

    def evaluate(x) -> bool:
        """Returns True if the search should stop."""
        nonlocal best_idx, best_final, stale_streak, consecutive_failures
        nonlocal n_evaluations, n_failures, stop_reason
        n_evaluations += 1
        started = time.perf_counter()
        try:
            breakdown = objective(x)
        except Exception as exc:
            n_failures += 1
            consecutive_failures += 1
            if consecutive_failures > _MAX_CONSECUTIVE_FAILURES:
                raise OptimizationAborted(
                    f"{consecutive_failures} consecutive objective failures; "
                    f"last error: {type(exc).__name__}: {exc}"
                )
            return n_evaluations >= config.max_iterations
        consecutive_failures = 0
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        obs = Observation(
            x=x, score=breakdown, iteration=len(trace), wall_time_ms=elapsed_ms
        )
        trace.append(obs)
        xs.append(obs.x)
        ys.append(breakdown.s_final)
        if breakdown.s_final > best_final + _IMPROVEMENT_TOL:
            best_final = breakdown.s_final
            best_idx = len(trace) - 1
            stale_streak = 0
        else:
            stale_streak += 1
            if stale_streak >= config.patience:
                stop_reason = "patience"
                return True
        return n_evaluations >= config.max_iterations

    done = False
    for point in init_points:
        if evaluate(as_unit_vector(point)):
            done = True
            break

    while not done:
        if len(ys) >= 2:
            needs_fit = model is None or (
                len(ys) <= _REFIT_EVERY_AFTER
                or len(ys) - last_fit_count >= _REFIT_STRIDE
            )
            if needs_fit:
                model = fit_gp(np.array(xs), np.array(ys))
                last_fit_count = len(ys)
            elif len(ys) > last_data_count:
                # between hyperparameter refits, still condition on every
                # observation so EI collapses at just-visited points
                model = condition_gp(model, np.array(xs), np.array(ys))
            last_data_count = len(ys)
            proposal = propose_next(
                model,
                best_final,
                acq_rng,
                n_candidates=config.acq_candidates,
                refine_steps=config.acq_refine_steps,
            )
        else:
            # not enough scored points to fit; fall back to quasi-random
            proposal = as_unit_vector(acq_rng.random(NUM_PARAMS))
        done = evaluate(proposal)

    if best_idx < 0:
        raise OptimizationAborted("no candidate was scored successfully")

    best = trace[best_idx]
    return SearchResult(
        best_x=best.x,
        best_score=best.score,
        trace=tuple(trace),
        stop_reason=stop_reason,
        n_evaluations=n_evaluations,
        n_failures=n_failures,
    )


def write_trace_csv(path, trace, include_timings: bool = False) -> None:
    """CSV trace for the report command.

    Timing samples vary run to run, so by default the wall_time_ms
    column is written as 0 to keep same-seed runs byte-identical; pass
    include_timings=True for the measured values.
    """
    lines = ["iteration,wall_time_ms,s_target,s_guide,s_final,best_so_far"]
    best = -np.inf
    for obs in trace:
        best = max(best, obs.score.s_final)
        ms = int(round(obs.wall_time_ms)) if include_timings else 0
        lines.append(
            f"{obs.iteration},{ms},{obs.score.s_target!r},"
            f"{obs.score.s_guide!r},{obs.score.s_final!r},{best!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trace_json(path, trace) -> None:
    """JSON sidecar with every evaluated parameter vector."""
    payload = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "observations": [
            {
                "iteration": obs.iteration,
                "x": [float(v) for v in obs.x],
                "s_target": obs.score.s_target,
                "s_guide": obs.score.s_guide,
                "s_final": obs.score.s_final,
                "wall_time_ms": obs.wall_time_ms,
            }
            for obs in trace
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_trace_csv(path) -> list:
    """Parse the CSV trace into row dicts; raises ValueError when malformed."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or lines[0] != "iteration,wall_time_ms,s_target,s_guide,s_final,best_so_far":
        raise ValueError("trace CSV missing expected header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed trace row: {ln!r}")
        rows.append(
            {
                "iteration": int(parts[0]),
                "wall_time_ms": float(parts[1]),
                "s_target": float(parts[2]),
                "s_guide": float(parts[3]),
                "s_final": float(parts[4]),
                "best_so_far": float(parts[5]),
            }
        )
    if not rows:
        raise ValueError("trace CSV has no observations")
    return rows
