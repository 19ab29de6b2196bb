"""Iterative causal graph cut: alternate data collection, covariance
re-estimation and design re-selection, then average the per-round DR estimates.
"""

import hashlib
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import as_array, empirical_covariance
from .estimators import crossfit_dr, dr_estimate, exposure_indicators, fit_outcome_model, residuals
from .graph import Clustering, global_design, individual_design
from .graphcut import DesignSelection, SpectralConfig, adjacency_spectral_design, select_design
from .mse import sigma1_squared

__all__ = [
    "CgcConfig",
    "RoundRecord",
    "CgcTrace",
    "run_cgc",
    "initial_design",
    "run_fixed_design",
    "run_with_known_covariance",
    "run_single_experiment",
]

COVARIANCE_MODES = ("cumulative", "single-batch")
INITIAL_DESIGNS = ("bisection", "individual", "global")


def initial_design(g, spec="bisection", cfg=SpectralConfig()):
    """Round-1 design: a named choice or a given clustering.

    ``"bisection"`` splits the adjacency graph in two, which keeps treatment
    variation for the first regression without paying the individual
    design's variance for a whole round.
    """
    R = g.region_count
    if isinstance(spec, Clustering):
        if spec.region_count != R:
            raise ValueError("initial design and graph disagree on the number of regions")
        return spec
    if spec == "individual":
        return individual_design(R)
    if spec == "global":
        return global_design(R)
    if spec == "bisection":
        return adjacency_spectral_design(g, 2, cfg)
    raise ValueError(f"unknown initial design {spec!r}")


@dataclass(frozen=True)
class CgcConfig:
    batch_size: int = 20
    total_repetitions: int = 100
    initial_design: Clustering | str = "bisection"
    covariance_mode: str = "cumulative"
    shrinkage: float = 0.1
    regression: str = "ridge"
    ridge_penalty: float = 1.0
    folds: int = 0
    m_max: int | None = None
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        B, N = self.batch_size, self.total_repetitions
        if B < 1 or N < 1 or B > N or N % B:
            raise ValueError(f"batch size {B} must divide total repetitions {N}")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.folds == 1 or self.folds < 0:
            raise ValueError("folds must be 0 (no cross-fitting) or at least 2")
        if isinstance(self.initial_design, str) and self.initial_design not in INITIAL_DESIGNS:
            raise ValueError(f"initial_design must be a Clustering or one of {INITIAL_DESIGNS}")
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in [0, 1]")

    @property
    def rounds(self):
        return self.total_repetitions // self.batch_size


@dataclass(frozen=True)
class RoundRecord:
    round: int
    design: Clustering
    residual_rows: int
    covariance_digest: str
    per_m_mse: list
    chosen_m: int
    ate: float
    both_arms: bool


@dataclass(frozen=True)
class CgcTrace:
    rounds: list
    final_ate: float

    @property
    def chosen_m(self):
        return [r.chosen_m for r in self.rounds]

    def to_csv(self):
        lines = ["round,chosen_m,ate_round"]
        lines += [f"{r.round},{r.chosen_m},{r.ate!r}" for r in self.rounds]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SingleExperimentDesign(DesignSelection):
    reference_mse: float | None = None


def _digest(S):
    return hashlib.sha256(np.ascontiguousarray(S, dtype=float).tobytes()).hexdigest()[:16]


def _round_ate(batch, history, model, cfg):
    if cfg.folds >= 2:
        return crossfit_dr([batch], cfg.folds, cfg.regression, cfg.ridge_penalty, history=history)
    return dr_estimate(batch, model)


def _both_arms(batch):
    """Whether the batch holds at least one all-treated and one all-control exposure."""
    T1, T0 = exposure_indicators(batch.graph, batch.A)
    return bool(T1.any() and T0.any())


def _run(env, cfg, rng, choose):
    g = env.graph
    design = initial_design(g, cfg.initial_design, cfg.spectral)
    history, records = [], []
    for l in range(1, cfg.rounds + 1):
        batch = env.sample(design, cfg.batch_size, rng)
        history.append(batch)
        fit_on = history if cfg.covariance_mode == "cumulative" else [batch]
        model = fit_outcome_model(fit_on, cfg.regression, cfg.ridge_penalty)
        ate = _round_ate(batch, fit_on[:-1], model, cfg)
        next_design, sel, E, S = choose(fit_on, model)
        records.append(
            RoundRecord(
                round=l,
                design=design,
                residual_rows=0 if E is None else E.shape[0],
                covariance_digest="" if S is None else _digest(S),
                per_m_mse=[] if sel is None else list(sel.per_m_mse),
                chosen_m=next_design.cluster_count if sel is None else sel.chosen_m,
                ate=ate,
                both_arms=_both_arms(batch),
            )
        )
        design = next_design
    ates = [r.ate for r in records]
    return CgcTrace(records, float(np.mean(ates)))


def run_cgc(env, cfg=CgcConfig(), rng=None):
    """Run N/B rounds of collect -> refit -> estimate covariance -> reselect.

    ``env`` needs a ``graph`` and ``sample(design, n, rng) -> ExperimentBatch``.
    Round l is collected under the design chosen after round l-1 (the initial
    design for round 1, a two-way adjacency split by default); its ATE uses only that round's batch.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    g = env.graph

    def choose(data, model):
        E = np.vstack([residuals(b, model) for b in data])
        S = empirical_covariance(E, cfg.shrinkage).values
        sel = select_design(
            g, S, N=cfg.total_repetitions, m_max=cfg.m_max, cfg=cfg.spectral, threads=cfg.threads
        )
        return sel.clustering, sel, E, S

    return _run(env, cfg, rng, choose)


def run_fixed_design(env, design, cfg=CgcConfig(), rng=None):
    """Same batched DR pipeline with the design held fixed (GD, ID, tilings, OCGC)."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    cfg = replace(cfg, initial_design=design)
    return _run(env, cfg, rng, lambda data, model: (design, None, None, None))


def run_with_known_covariance(g, S, N=1, cfg=CgcConfig()):
    """Oracle design: one selection sweep using the true covariance."""
    return select_design(g, as_array(S, n=g.region_count), N=N, m_max=cfg.m_max, cfg=cfg.spectral, threads=cfg.threads)


def run_single_experiment(g, S_prior, cfg=CgcConfig(), reference=None):
    """Design for a single experiment (N = 1) from a prior covariance guess.

    The global design cannot identify the ATE from one experiment, so it is
    never returned; a warning is emitted when it would otherwise have won.
    If ``reference`` is given, the chosen design's exact MSE under it is
    stored in ``reference_mse``.
    """
    S_prior = as_array(S_prior, n=g.region_count)
    S_prior = 0.5 * (S_prior + S_prior.T)
    sel = select_design(
        g, S_prior, N=1, m_max=cfg.m_max, cfg=cfg.spectral, exclude_global=True, threads=cfg.threads
    )
    glob = sigma1_squared(g, Clustering(np.zeros(g.region_count, dtype=int)), S_prior, 1)
    if glob < sel.sigma1_sq:
        warnings.warn(
            "global design has the lowest estimated MSE but leaves the ATE unidentifiable "
            "from a single experiment; returning the best non-global design",
            stacklevel=2,
        )
    ref = None if reference is None else sigma1_squared(g, sel.clustering, reference, 1)
    return SingleExperimentDesign(sel.clustering, sel.chosen_m, sel.per_m_mse, sel.candidates, ref)
