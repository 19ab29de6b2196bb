"""Command-line entry point: ``cgcut [global flags] <subcommand> [options]``.

Every run resolves a flat configuration (defaults < ``--config`` file <
``--set`` overrides < dedicated flags), writes its outputs into ``--out`` and
leaves ``manifest.cfg`` next to them. Feeding the manifest back through
``--config`` reproduces the outputs.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .cgc import CgcConfig, run_cgc
from .config import ConfigError, format_manifest, load_config, resolve
from .covariance import build_model_covariance, read_covariance_csv
from .estimators import crossfit_dr, dr_estimate, fit_outcome_model, is_estimate, read_batch_csv, write_batch_csv
from .graph import build_grid, global_design, individual_design, read_clustering, tiling_partition, write_clustering
from .graphcut import SpectralConfig, adjacency_spectral_design, select_design
from .mse import decompose
from .synth import SyntheticEnv, benchmark, mc_ate, sample_batch, true_ate

SUBCOMMANDS = ("design", "mse", "estimate", "cgc", "simulate", "benchmark")


def _fmt(x):
    return repr(float(x))


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _graph(cfg):
    path = cfg["grid.file"]
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"graph file not found: {path}")
        return read_clustering(path)[0]
    shape = cfg["grid.shape"]
    dims = {
        "square": {"side": cfg["grid.side"]},
        "rectangle": {"width": cfg["grid.width"], "height": cfg["grid.height"]},
        "circle": {"radius": cfg["grid.radius"]},
        "fan": {"radius": cfg["grid.radius"], "sectors": cfg["grid.sectors"]},
    }
    if shape not in dims:
        raise ConfigError(f"grid.shape must be one of {sorted(dims)}, got {shape!r}")
    try:
        return build_grid(shape, **dims[shape])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _graph_for(cfg, spec):
    """The configured graph, or the one stored in the clustering file when no grid file is given."""
    if not cfg["grid.file"] and spec and os.path.isfile(spec):
        return read_clustering(spec)[0]
    return _graph(cfg)


def _covariance(cfg, g, rho=None):
    path = cfg["covariance.csv"]
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"covariance file not found: {path}")
        S = read_covariance_csv(path)
        if S.values.shape[0] != g.region_count:
            raise ConfigError(f"{path}: covariance is {S.values.shape[0]}x{S.values.shape[0]}, graph has {g.region_count} regions")
        return S
    try:
        return build_model_covariance(cfg["covariance.model"], cfg["covariance.rho"] if rho is None else rho, g.region_count)
    except ValueError as exc:
        raise ConfigError(f"covariance: {exc}") from None


def _spectral(cfg):
    try:
        return SpectralConfig(
            eigen_tolerance=cfg["design.eigen_tolerance"],
            zero_eigen_threshold=cfg["design.zero_eigen_threshold"],
            kmeans_restarts=cfg["design.kmeans_restarts"],
            kmeans_max_iters=cfg["design.kmeans_max_iters"],
            rng_seed=cfg["run.seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"design: {exc}") from None


def _design(spec, g, cfg, default="individual"):
    """A named design (global, individual, bisection, tiling:k, spectral:m) or a clustering file."""
    spec = spec or default
    R = g.region_count
    try:
        if spec == "global":
            return global_design(R)
        if spec == "individual":
            return individual_design(R)
        if spec == "bisection":
            return adjacency_spectral_design(g, 2, _spectral(cfg))
        if spec.startswith("tiling:"):
            return tiling_partition(g, int(spec.split(":", 1)[1]))
        if spec.startswith("spectral:"):
            return adjacency_spectral_design(g, int(spec.split(":", 1)[1]), _spectral(cfg))
    except ValueError as exc:
        raise ConfigError(f"design {spec!r}: {exc}") from None
    if not os.path.isfile(spec):
        raise ConfigError(f"clustering file not found: {spec}")
    _, c = read_clustering(spec)
    if c is None or c.region_count != R:
        raise ConfigError(f"{spec}: clustering does not cover the {R} regions of the graph")
    return c


def _covariate_law(text):
    parts = text.split(":")
    try:
        if parts[0] == "uniform" and len(parts) == 3:
            return ("uniform", float(parts[1]), float(parts[2]))
        if parts[0] == "constant" and len(parts) == 2:
            return ("constant", float(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"env.covariate_law must be 'uniform:a:b' or 'constant:c', got {text!r}")


def _env(cfg, g, S):
    try:
        return SyntheticEnv(g, S, signal=cfg["env.signal"], covariate_law=_covariate_law(cfg["env.covariate_law"]), seed=cfg["run.seed"])
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from None


def _cgc_config(cfg, g, N=None, threads=1):
    init = cfg["cgc.initial_design"]
    if init not in ("bisection", "individual", "global"):
        init = _design(init, g, cfg)
    try:
        return CgcConfig(
            batch_size=cfg["cgc.batch_size"],
            total_repetitions=cfg["cgc.total_repetitions"] if N is None else N,
            initial_design=init,
            covariance_mode=cfg["cgc.covariance_mode"],
            shrinkage=cfg["cgc.shrinkage"],
            regression=cfg["cgc.regression"],
            ridge_penalty=cfg["cgc.ridge_penalty"],
            folds=cfg["cgc.folds"],
            m_max=cfg["design.m_max"],
            spectral=_spectral(cfg),
            seed=cfg["run.seed"],
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(f"cgc: {exc}") from None


def cmd_mse(cfg, out, threads):
    g = _graph_for(cfg, cfg["design.clustering"])
    c = _design(cfg["design.clustering"], g, cfg, default="global")
    b = decompose(g, c, _covariance(cfg, g), N=cfg["design.n"])
    row = b.as_row()
    header = ",".join(row)
    line = ",".join(_fmt(v) for v in row.values())
    _write(os.path.join(out, "mse.csv"), f"{header}\n{line}\n")
    print(f"{header}\n{line}")


def cmd_design(cfg, out, threads):
    g = _graph(cfg)
    S = _covariance(cfg, g)
    sel = select_design(
        g,
        S.values,
        N=cfg["design.n"],
        m_max=cfg["design.m_max"],
        cfg=_spectral(cfg),
        include_individual=cfg["design.include_individual"],
        threads=threads,
    )
    write_clustering(os.path.join(out, "clustering.txt"), g, sel.clustering)
    lines = ["m,sigma1_sq"] + [f"{m},{_fmt(v)}" for m, v in sel.per_m_mse]
    _write(os.path.join(out, "sweep.csv"), "\n".join(lines) + "\n")
    print(f"chosen m={sel.chosen_m} sigma1_sq={_fmt(sel.sigma1_sq)}")


def cmd_estimate(cfg, out, threads):
    spec = cfg["design.clustering"]
    if not spec:
        raise ConfigError("estimate needs design.clustering (the design the batch was drawn under)")
    g = _graph_for(cfg, spec)
    c = _design(spec, g, cfg)
    path = cfg["estimate.batch"]
    if not path or not os.path.isfile(path):
        raise ConfigError(f"batch file not found: {path or '(estimate.batch is empty)'}")
    batch = read_batch_csv(path, g, c)
    model = fit_outcome_model([batch], cfg["cgc.regression"], cfg["cgc.ridge_penalty"])
    rows = [
        ("IS", is_estimate(batch)),
        ("DR", dr_estimate(batch, model)),
        ("DR-CF", crossfit_dr([batch], cfg["estimate.folds"], cfg["cgc.regression"], cfg["cgc.ridge_penalty"])),
    ]
    text = "estimator,value\n" + "".join(f"{name},{_fmt(v)}\n" for name, v in rows)
    _write(os.path.join(out, "estimates.csv"), text)
    print(text, end="")


def cmd_simulate(cfg, out, threads):
    g = _graph(cfg)
    env = _env(cfg, g, _covariance(cfg, g))
    c = _design(cfg["design.clustering"], g, cfg)
    rng = np.random.default_rng(cfg["run.seed"])
    batch = sample_batch(env, c, cfg["simulate.repetitions"], rng)
    write_batch_csv(os.path.join(out, "batch.csv"), batch)
    write_clustering(os.path.join(out, "clustering.txt"), g, c)
    mc, se = mc_ate(env, cfg["simulate.mc_repetitions"], rng)
    truth = true_ate(env)
    _write(os.path.join(out, "truth.csv"), f"true_ate,mc_ate,mc_se\n{_fmt(truth)},{_fmt(mc)},{_fmt(se)}\n")
    print(f"repetitions={batch.n} m={c.cluster_count} true_ate={_fmt(truth)} mc_ate={_fmt(mc)}")


def cmd_cgc(cfg, out, threads):
    g = _graph(cfg)
    env = _env(cfg, g, _covariance(cfg, g))
    ccfg = _cgc_config(cfg, g, threads=threads)
    trace = run_cgc(env, ccfg, np.random.default_rng(cfg["run.seed"]))
    _write(os.path.join(out, "trace.csv"), trace.to_csv())
    if cfg["cgc.write_clusterings"]:
        for rec in trace.rounds:
            write_clustering(os.path.join(out, f"round_{rec.round:03d}.txt"), g, rec.design)
    summary = f"rounds={len(trace.rounds)} final_ate={_fmt(trace.final_ate)} true_ate={_fmt(true_ate(env))}"
    _write(os.path.join(out, "summary.txt"), summary + "\n")
    print(summary)


def cmd_benchmark(cfg, out, threads):
    g = _graph(cfg)
    rhos, ns = cfg["benchmark.rhos"], cfg["benchmark.ns"]
    if not rhos or not ns:
        raise ConfigError("benchmark.rhos and benchmark.ns must each hold at least one value")
    if len(rhos) > 1 and len(ns) > 1:
        raise ConfigError("sweep either benchmark.rhos or benchmark.ns, not both")
    if cfg["covariance.csv"] and len(rhos) > 1:
        raise ConfigError("a covariance CSV fixes the covariance; sweep benchmark.ns instead")
    methods = cfg["benchmark.methods"]
    if len(ns) > 1:
        name, values = "N", ns
        S = _covariance(cfg, g, rhos[0])
        points = {n: (_env(cfg, g, S), _cgc_config(cfg, g, N=n)) for n in ns}
    else:
        name, values = "rho", rhos
        ccfg = _cgc_config(cfg, g, N=ns[0])
        points = {r: (_env(cfg, g, _covariance(cfg, g, r)), ccfg) for r in rhos}
    try:
        report = benchmark(
            lambda v: points[v],
            methods,
            name,
            values,
            replications=cfg["benchmark.replications"],
            threads=threads,
            base_seed=cfg["run.seed"],
        )
    except ValueError as exc:
        if "unknown method" in str(exc):
            raise ConfigError(str(exc)) from None
        raise
    _write(os.path.join(out, "benchmark.csv"), report.to_csv(wall_time=cfg["benchmark.wall_time"]))
    if cfg["benchmark.svg"]:
        report.to_svg(os.path.join(out, "benchmark.svg"))
    print(f"{len(report.rows)} rows written")


COMMANDS = {
    "design": cmd_design,
    "mse": cmd_mse,
    "estimate": cmd_estimate,
    "cgc": cmd_cgc,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}

# dedicated flags per subcommand -> config key
FLAGS = {
    "design": [("--graph", "grid.file"), ("--covariance", "covariance.csv"), ("--n", "design.n"), ("--m-max", "design.m_max")],
    "mse": [("--graph", "grid.file"), ("--clustering", "design.clustering"), ("--covariance", "covariance.csv"), ("--n", "design.n")],
    "estimate": [("--batch", "estimate.batch"), ("--clustering", "design.clustering"), ("--folds", "estimate.folds")],
    "cgc": [("--covariance", "covariance.csv")],
    "simulate": [("--clustering", "design.clustering"), ("--covariance", "covariance.csv")],
    "benchmark": [("--svg", "benchmark.svg")],
}


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master seed (run.seed)")
    parser.add_argument("--threads", type=int, default=default, help="worker cap; default all cores")
    parser.add_argument("--out", default=default, help="output directory (default: current directory)")
    parser.add_argument("--config", default=default, help="flat key = value config file")
    parser.add_argument("--set", action="append", default=argparse.SUPPRESS if suppress else [], metavar="KEY=VALUE")


def build_parser():
    parser = argparse.ArgumentParser(prog="cgcut", description="Spatial cluster-randomized design by causal graph cut.")
    parser.add_argument("--version", action="version", version=f"cgcut {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        _global_flags(sp, suppress=True)
        for flag, key in FLAGS[name]:
            if key == "benchmark.svg":
                sp.add_argument(flag, dest=key, action="store_const", const="true")
            else:
                sp.add_argument(flag, dest=key, metavar=key.split(".")[-1].upper())
    return parser


def _run(argv):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    opts = vars(args)
    layers = []
    if opts.get("config"):
        layers.append(load_config(opts["config"]))
    overrides = {}
    for item in opts.get("set") or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    layers.append(overrides)
    layers.append({key: str(v) for key, v in opts.items() if "." in key and v is not None})
    flags = {}
    if opts.get("seed") is not None:
        flags["run.seed"] = str(opts["seed"])
    if opts.get("threads") is not None:
        if opts["threads"] < 1:
            raise ConfigError("--threads must be at least 1")
        flags["run.threads"] = str(opts["threads"])
    layers.append(flags)
    cfg = resolve(*layers)
    threads = cfg["run.threads"] or os.cpu_count() or 1
    out = opts.get("out") or "."
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, "manifest.cfg"), format_manifest(cfg, args.command, __version__))
    COMMANDS[args.command](cfg, out, threads)
    return 0


def main(argv=None):
    """Run the CLI; returns 0 on success, 2 on a configuration error, 1 otherwise."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _run(argv)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"cgcut: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI reports any failure as exit 1
        print(f"cgcut: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
