"""Synthetic spatial A/B environment, ATE oracles and the replication benchmark.

Outcomes follow ``Y = 3 O sin(l_x + l_y + s (A + 0.5 Abar)) + e`` with e drawn
from a zero-mean Gaussian with the environment's covariance.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cgc import CgcConfig, run_cgc, run_fixed_design, run_with_known_covariance
from .covariance import CovarianceMatrix, as_array, build_model_covariance, factorize_for_sampling
from .estimators import ExperimentBatch, neighbor_average
from .graph import global_design, individual_design, tiling_partition
from .graphcut import adjacency_spectral_design, cut_partition, derive_seed

__all__ = [
    "SyntheticEnv",
    "sample_batch",
    "true_ate",
    "mc_ate",
    "relative_mse",
    "BenchmarkRow",
    "BenchmarkReport",
    "benchmark",
    "method_design",
]


@dataclass(frozen=True, eq=False)
class SyntheticEnv:
    """Data source for the synthetic benchmarks.

    ``covariate_law`` is ``("uniform", low, high)`` or ``("constant", c)``.
    """

    graph: object
    covariance: object
    signal: float = 0.025
    covariate_law: tuple = ("uniform", 0.5, 1.5)
    seed: int = 0
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.signal <= 0:
            raise ValueError("signal strength must be positive")
        S = as_array(self.covariance, n=self.graph.region_count)
        law = tuple(self.covariate_law)
        if law[0] == "uniform":
            if len(law) != 3 or not law[1] < law[2]:
                raise ValueError("uniform covariate law needs (\"uniform\", low, high) with low < high")
        elif law[0] == "constant":
            if len(law) != 2:
                raise ValueError("constant covariate law needs (\"constant\", c)")
        else:
            raise ValueError(f"unknown covariate law {law[0]!r}")
        object.__setattr__(self, "covariate_law", law)
        object.__setattr__(self, "factor", factorize_for_sampling(S))

    @classmethod
    def from_model(cls, graph, model, rho, **kwargs):
        return cls(graph, build_model_covariance(model, rho, graph.region_count), **kwargs)

    @property
    def covariate_mean(self):
        law = self.covariate_law
        return 0.5 * (law[1] + law[2]) if law[0] == "uniform" else float(law[1])

    def draw_covariates(self, n, rng):
        law = self.covariate_law
        shape = (n, self.graph.region_count)
        if law[0] == "uniform":
            return rng.uniform(law[1], law[2], size=shape)
        return np.full(shape, float(law[1]))

    def draw_noise(self, n, rng):
        z = rng.standard_normal((n, self.graph.region_count))
        return z @ self.factor.T

    def mean_outcome(self, A, O):
        """The true outcome function g(A, O), applied row-wise."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        O = np.atleast_2d(np.asarray(O, dtype=float))
        phase = self.graph.coords[:, 0] + self.graph.coords[:, 1]
        dose = A + 0.5 * neighbor_average(self.graph, A)
        return 3.0 * O * np.sin(phase + self.signal * dose)

    def sample(self, design, n, rng=None):
        return sample_batch(self, design, n, rng)


def sample_batch(env, design, n, rng=None):
    """Draw n repetitions under a cluster design: coins per cluster, then O, then e."""
    rng = np.random.default_rng(env.seed) if rng is None else rng
    coins = (rng.random((n, design.cluster_count)) < 0.5).astype(float)
    A = coins[:, design.assignment]
    O = env.draw_covariates(n, rng)
    e = env.draw_noise(n, rng)
    Y = env.mean_outcome(A, O) + e
    return ExperimentBatch(env.graph, design, O, A, Y)


def true_ate(env):
    """Analytic ATE: the outcome function is linear in O, so plug in its mean."""
    R = env.graph.region_count
    mu = np.full((1, R), env.covariate_mean)
    diff = env.mean_outcome(np.ones((1, R)), mu) - env.mean_outcome(np.zeros((1, R)), mu)
    return float(diff.sum())


def mc_ate(env, n_mc=1000, rng=None, chunk=10_000):
    """Monte Carlo ATE from paired all-treated / all-control runs with common O and e.

    Runs are drawn in chunks (covariates, then noise) to bound memory.
    Returns ``(estimate, standard_error)``; the error is NaN for a single run.
    """
    if n_mc < 1:
        raise ValueError("need at least one Monte Carlo repetition")
    rng = np.random.default_rng(env.seed) if rng is None else rng
    R = env.graph.region_count
    per_rep = []
    for start in range(0, n_mc, chunk):
        n = min(chunk, n_mc - start)
        O = env.draw_covariates(n, rng)
        e = env.draw_noise(n, rng)
        r1 = env.mean_outcome(np.ones((n, R)), O) + e
        r0 = env.mean_outcome(np.zeros((n, R)), O) + e
        per_rep.append((r1 - r0).sum(axis=1))
    per_rep = np.concatenate(per_rep)
    se = float(per_rep.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else float("nan")
    return float(per_rep.mean()), se


def relative_mse(estimates, truth):
    est = np.asarray(estimates, dtype=float)
    if truth == 0:
        raise ValueError("relative MSE is undefined when the true ATE is 0")
    if est.size < 1:
        raise ValueError("need at least one estimate")
    return float(np.mean((est - truth) ** 2) / truth**2)


def method_design(method, env, cfg):
    """Fixed design for a non-adaptive method name, or None for CGC."""
    g = env.graph
    R = g.region_count
    if method == "CGC":
        return None
    if method == "OCGC":
        return run_with_known_covariance(g, env.covariance, cfg.total_repetitions, cfg).clustering
    if method == "GD":
        return global_design(R)
    if method == "ID":
        return individual_design(R)
    if method.startswith("tiling:"):
        return tiling_partition(g, int(method.split(":", 1)[1]))
    if method == "adjacency-spectral" or method.startswith("adjacency-spectral:"):
        m = int(method.split(":", 1)[1]) if ":" in method else None
        return adjacency_spectral_design(g, m, cfg.spectral)
    if method.startswith("cut:"):
        return cut_partition(g, env.covariance, int(method.split(":", 1)[1]), 1, cfg.spectral)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    param_name: str
    param_value: float
    rel_mse: float
    se: float
    replications: int
    wall_ms: float
    defined: bool = True
    estimates: tuple = field(default=(), repr=False)


@dataclass
class BenchmarkReport:
    rows: list
    truth: dict = field(default_factory=dict)

    HEADER = "method,param_name,param_value,rel_mse,se,replications,wall_ms"

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.param_name, r.param_value, r.method))

    def to_csv(self, wall_time=True):
        lines = [self.HEADER]
        for r in self.sorted_rows():
            wall = f"{r.wall_ms:.0f}" if wall_time else "0"
            lines.append(
                f"{r.method},{r.param_name},{r.param_value!r},{r.rel_mse!r},{r.se!r},{r.replications},{wall}"
            )
        return "\n".join(lines) + "\n"

    def row(self, method, param_value):
        for r in self.rows:
            if r.method == method and r.param_value == param_value:
                return r
        raise KeyError((method, param_value))

    def to_svg(self, path):
        """Log-scale line chart, one series per method."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "cgcut"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method in sorted({r.method for r in self.rows}):
            pts = sorted((r.param_value, r.rel_mse) for r in self.rows if r.method == method and r.defined)
            if pts:
                ax.plot(*zip(*pts), marker="o", label=method)
        ax.set_yscale("log")
        ax.set_xlabel(self.rows[0].param_name if self.rows else "")
        ax.set_ylabel("relative MSE")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def _one_replication(env, method, design, cfg, seed):
    rng = np.random.default_rng(seed)
    cfg = replace(cfg, seed=seed)
    if method == "CGC":
        trace = run_cgc(env, cfg, rng)
    else:
        trace = run_fixed_design(env, design, cfg, rng)
    return trace.final_ate, all(r.both_arms for r in trace.rounds) or method != "GD"


def benchmark(make_env, methods, param_name, param_values, replications=50, cfg=CgcConfig(), threads=1, base_seed=0):
    """Relative MSE of each method at each parameter point.

    ``make_env(value) -> (SyntheticEnv, CgcConfig | None)``; every method at a
    point sees the same per-replication seeds. GD is marked undefined when a
    batch lacks either all-treated or all-control repetitions, or N < 2.
    """
    rows, truth = [], {}
    for k, value in enumerate(param_values):
        env, point_cfg = make_env(value)
        point_cfg = point_cfg or cfg
        ate = true_ate(env)
        truth[value] = ate
        seeds = [derive_seed(base_seed, k, r) for r in range(replications)]
        for method in methods:
            start = time.perf_counter()
            design = method_design(method, env, point_cfg)
            task = lambda s, method=method, design=design: _one_replication(env, method, design, point_cfg, s)
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    out = list(pool.map(task, seeds))
            else:
                out = [task(s) for s in seeds]
            wall = 1000.0 * (time.perf_counter() - start)
            est = np.array([o[0] for o in out])
            defined = all(o[1] for o in out) and not (method == "GD" and point_cfg.total_repetitions < 2)
            sq = (est - ate) ** 2 / ate**2
            rel = float(sq.mean()) if defined else float("nan")
            se = float(sq.std(ddof=1) / math.sqrt(len(sq))) if defined and len(sq) > 1 else float("nan")
            rows.append(BenchmarkRow(method, param_name, float(value), rel, se, replications, wall, defined, tuple(est)))
    return BenchmarkReport(rows, truth)
