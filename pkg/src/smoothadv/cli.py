"""Command-line entry point: ``smoothadv {train,eval,landscape,probe-hessian,gen-data}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import pgd
from .config import ConfigError, load_config
from .data import save_idx, synth_gaussians
from .diagnostics import SmoothnessProbe, landscape_slice
from .formats import (load_params, save_params, write_history_csv, write_landscape_csv,
                      write_probe_csv, write_smoothness_csv)
from .hessian import taylor_estimates, top_eigenvalue
from .network import NetworkSpec, init_network
from .trainer import derive_seed, evaluate, train

log = logging.getLogger("smoothadv")


class UsageError(Exception):
    """Bad invocation or configuration (exit status 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smoothadv", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("config")
    t.add_argument("-o", "--output", help="output directory (overrides config.output)")

    e = sub.add_parser("eval", help="clean and PGD accuracy of a parameter file")
    e.add_argument("config")
    e.add_argument("--params", help="parameter file; omit to evaluate a freshly initialized net")
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--out", help="also write the result as JSON here")

    ls = sub.add_parser("landscape", help="write a filter-normalized loss slice as CSV")
    ls.add_argument("config")
    ls.add_argument("--params", required=True)
    ls.add_argument("--out", required=True)
    ls.add_argument("--points", type=int, default=21)
    ls.add_argument("--range", type=float, default=1.0, dest="extent")
    ls.add_argument("--samples", type=int, default=100)

    ph = sub.add_parser("probe-hessian", help="per-sample curvature estimates as CSV")
    ph.add_argument("config")
    ph.add_argument("--params", required=True)
    ph.add_argument("--out", required=True)
    ph.add_argument("--samples", type=int, default=64)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as an IDX pair")
    g.add_argument("--out-prefix", required=True,
                   help="writes <prefix>-images.idx and <prefix>-labels.idx")
    g.add_argument("--n-per-class", type=int, default=100)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--separation", type=float, default=0.4)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    return p


def _load(path):
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except ConfigError as exc:
        raise UsageError(f"config error: {exc}") from exc


def _setup(cfg, config_path):
    try:
        train_set, test_set = cfg.load_data(Path(config_path).parent)
    except ConfigError as exc:
        raise UsageError(f"config error: {exc}") from exc
    try:
        spec = cfg.network_spec(train_set.dim, train_set.n_classes)
        return train_set, test_set, spec, cfg.train_config(spec)
    except ValueError as exc:
        raise UsageError(f"config error: {exc}") from exc


def _params_for(path, spec: NetworkSpec):
    if path is None:
        return init_network(spec)
    sizes, params = load_params(path)
    if tuple(sizes) != spec.layer_sizes:
        raise UsageError(f"{path}: layer sizes {sizes} do not match config {spec.layer_sizes}")
    return params


def _subset(dataset, n, seed):
    idx = np.random.default_rng(seed).permutation(len(dataset))[:min(n, len(dataset))]
    return dataset.subset(np.sort(idx))


def cmd_train(args) -> int:
    cfg = _load(args.config)
    out = Path(args.output or cfg.output or "run")
    train_set, test_set, spec, tcfg = _setup(cfg, args.config)
    out.mkdir(parents=True, exist_ok=True)
    diag = cfg.diagnostics
    probe = None
    if diag.smoothness:
        sub = _subset(train_set, diag.smoothness_samples, derive_seed(cfg.seed, "smooth-subset"))
        probe = SmoothnessProbe(spec, sub.inputs, sub.labels, tcfg.evaluation_attack,
                                cfg.curriculum.probe, derive_seed(cfg.seed, "smoothness"),
                                diag.hutchinson_probes)
    result = train(tcfg, train_set, test_set, smoothness=probe)
    save_params(out / "params.bin", result.best_params, spec.layer_sizes)
    save_params(out / "params_final.bin", result.final_params, spec.layer_sizes)
    write_history_csv(out / "history.csv", result.history)
    if probe is not None:
        write_smoothness_csv(out / "smoothness.csv", probe.reports)
    if diag.landscape:
        sub = _subset(test_set, diag.landscape_samples, derive_seed(cfg.seed, "landscape-subset"))
        axis = np.linspace(-diag.landscape_range, diag.landscape_range, diag.landscape_points)
        grid = landscape_slice(result.best_params, spec, sub.inputs, sub.labels,
                               tcfg.evaluation_attack, axis, axis,
                               seed=derive_seed(cfg.seed, "landscape") % 2 ** 32)
        write_landscape_csv(out / "landscape.csv", grid)
    manifest = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "best_epoch": result.best_epoch,
        "layer_sizes": list(spec.layer_sizes),
        "numpy": np.__version__,
        "python": platform.python_version(),
        "threads": {k: os.environ.get(k) for k in
                    ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"trained {tcfg.epochs} epochs; best epoch {result.best_epoch}; wrote {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args.config)
    train_set, test_set, spec, tcfg = _setup(cfg, args.config)
    params = _params_for(args.params, spec)
    data = test_set if args.split == "test" else train_set
    res = evaluate(params, spec, data, tcfg.evaluation_attack,
                   np.random.default_rng(derive_seed(cfg.seed, "cli-eval")))
    text = json.dumps(res, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_landscape(args) -> int:
    cfg = _load(args.config)
    _, test_set, spec, tcfg = _setup(cfg, args.config)
    params = _params_for(args.params, spec)
    sub = _subset(test_set, args.samples, derive_seed(cfg.seed, "landscape-subset"))
    axis = np.linspace(-args.extent, args.extent, args.points)
    grid = landscape_slice(params, spec, sub.inputs, sub.labels, tcfg.evaluation_attack,
                           axis, axis, seed=derive_seed(cfg.seed, "landscape") % 2 ** 32)
    write_landscape_csv(args.out, grid)
    return 0


def cmd_probe(args) -> int:
    cfg = _load(args.config)
    train_set, _, spec, tcfg = _setup(cfg, args.config)
    params = _params_for(args.params, spec)
    sub = _subset(train_set, args.samples, derive_seed(cfg.seed, "probe-subset"))
    rng = np.random.default_rng(derive_seed(cfg.seed, "probe"))
    x_adv = pgd(params, spec, sub.inputs, sub.labels, tcfg.evaluation_attack, rng).x_adv
    pcfg = cfg.curriculum.probe
    rows = []
    for i in range(len(sub)):
        xi, yi = x_adv[i:i + 1], sub.labels[i:i + 1]
        est = taylor_estimates(params, spec, xi, yi, pcfg)
        est.power_value = top_eigenvalue(params, spec, xi, yi, pcfg, rng).power_value
        rows.append(est)
    write_probe_csv(args.out, rows)
    return 0


def cmd_gen_data(args) -> int:
    try:
        ds = synth_gaussians(args.n_per_class, args.dim, args.separation, args.classes,
                             args.seed, args.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_idx(ds, f"{prefix}-images.idx", f"{prefix}-labels.idx", shape=(1, args.dim))
    print(f"wrote {len(ds)} samples to {prefix}-images.idx / {prefix}-labels.idx")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "landscape": cmd_landscape,
            "probe-hessian": cmd_probe, "gen-data": cmd_gen_data}


def run_cli(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"smoothadv: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"smoothadv: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for any runtime failure
        print(f"smoothadv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
