"""Command-line driver.

    bhfreg <task> [--config run.cfg] [flags] --out DIR

Tasks: extract-bc, reconstruct, register-features, register-landmarks,
register-geometry, plus ``synth`` to write the synthetic fixtures.  Flags
override values from the key=value config file.  Exit status is 0 on
success, 2 for input/configuration errors and 3 for numerical failures;
errors go to stderr as ``error_code=<code> <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from . import io as bio
from .beltrami import BeltramiCoefficient, DiscreteMap, compute_bc, dilation
from .errors import BHFError, ConfigError, InputError, IoError, NumericalError, StepFailed
from .flow import DEFAULT_QUADRATURE, QUADRATURES, FlowSchedule, reconstruct
from .registration import (EnergyParams, delta_mask, register_features, register_geometry,
                           register_landmarks)

TASKS = ("extract-bc", "reconstruct", "register-features", "register-landmarks", "register-geometry")
SYNTH_KINDS = ("reconstruct", "features", "landmarks", "geometry")

# inputs each task needs, as RunConfig attribute names
REQUIRED = {
    "extract-bc": ("mesh_a", "param_a", "map"),
    "reconstruct": ("mesh_a", "param_a", "mu"),
    "register-features": ("mesh_a", "mesh_b", "param_a", "param_b", "feature_a", "feature_b"),
    "register-landmarks": ("mesh_a", "param_a", "landmarks"),
    "register-geometry": ("mesh_a", "mesh_b", "param_a", "param_b"),
}
PATH_KEYS = ("mesh_a", "mesh_b", "param_a", "param_b", "landmarks", "mu", "map", "feature_a", "feature_b")
PARAM_KEYS = tuple(f.name for f in fields(EnergyParams))

log = logging.getLogger("bhfreg")


@dataclass
class RunConfig:
    task: str
    out: str = "out"
    seed: int = 0
    figures: bool = True
    quadrature: str | None = None
    n_steps: int = 20
    params: EnergyParams = field(default_factory=EnergyParams)
    mesh_a: str | None = None
    mesh_b: str | None = None
    param_a: str | None = None
    param_b: str | None = None
    landmarks: str | None = None
    mu: str | None = None
    map: str | None = None
    feature_a: str | None = None
    feature_b: str | None = None

    @property
    def schedule(self) -> FlowSchedule:
        return FlowSchedule(self.n_steps)

    def validate(self):
        missing = [k for k in REQUIRED[self.task] if getattr(self, k) is None]
        if missing:
            flags = ", ".join("--" + k.replace("_", "-") for k in missing)
            raise ConfigError(f"{self.task} requires {flags}")
        for k in PATH_KEYS:
            p = getattr(self, k)
            if p is not None and not os.path.isfile(p):
                raise IoError(f"--{k.replace('_', '-')}: no such file {p}")
        if self.quadrature is not None and self.quadrature not in QUADRATURES:
            raise ConfigError(f"quadrature must be one of {QUADRATURES}")

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("task", "out", "seed", "figures", "quadrature", "n_steps")
             + PATH_KEYS}
        d["params"] = self.params.as_dict()
        return d


def _convert(key, value, kind):
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


_KINDS = {"alpha": float, "beta": float, "gamma": float, "dt": float, "epsilon": float,
          "max_iters": int, "delta_margin": float, "max_halvings": int, "mask_radius": float,
          "n_steps": int, "resync_every": int, "seed": int, "figures": bool}


def build_config(task: str, args: argparse.Namespace) -> RunConfig:
    """Merge config-file values with command-line flags (flags win)."""
    values = {}
    if args.config:
        base = os.path.dirname(os.path.abspath(args.config))
        for k, v in bio.read_config(args.config).items():
            if k not in PATH_KEYS + PARAM_KEYS + ("out", "seed", "figures", "quadrature", "task"):
                raise ConfigError(f"{args.config}: unknown key {k!r}")
            if k == "task":
                if v != task:
                    raise ConfigError(f"{args.config}: config is for task {v!r}, not {task!r}")
                continue
            if k in PATH_KEYS + ("out",) and not os.path.isabs(v):
                v = os.path.join(base, v)
            values[k] = v
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command", "verbose", "no_figures"):
            values[k] = v
    if args.no_figures:
        values["figures"] = False
    values = {k: _convert(k, v, _KINDS[k]) if k in _KINDS else v for k, v in values.items()}
    n_steps = values.pop("n_steps", 20)
    quadrature = values.pop("quadrature", None)
    pkw = {k: values.pop(k) for k in list(values) if k in PARAM_KEYS}
    pkw["n_steps"] = n_steps
    if quadrature is not None:
        pkw["quadrature"] = quadrature
    try:
        params = EnergyParams(**pkw)
        FlowSchedule(n_steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(task, params=params, n_steps=n_steps, quadrature=quadrature, **values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- tasks

def _load_a(cfg):
    mesh = bio.load_mesh(cfg.mesh_a)
    return bio.load_param(cfg.param_a, mesh)


def _load_b(cfg):
    mesh = bio.load_mesh(cfg.mesh_b)
    return bio.load_param(cfg.param_b, mesh)


def _write_map(cfg, f: DiscreteMap, mu):
    bio.write_field(os.path.join(cfg.out, "map.txt"), f.values, "map", f.domain, f.source.pole)
    bio.write_field(os.path.join(cfg.out, "mu.txt"), np.asarray(getattr(mu, "values", mu)), "mu")
    bio.export_field(getattr(mu, "values", mu), f.source.mesh, os.path.join(cfg.out, "mu_abs.ply"),
                     "ply-color", "abs_mu")


def _fig(cfg, name):
    return os.path.join(cfg.out, name) if cfg.figures else None


def task_extract_bc(cfg: RunConfig) -> dict:
    src = _load_a(cfg)
    f = DiscreteMap(bio.load_field(cfg.map, src.n_vertices, 2), src)
    mu = compute_bc(f)
    K = dilation(mu)
    bio.write_field(os.path.join(cfg.out, "mu.txt"), mu.values, "mu")
    bio.write_field(os.path.join(cfg.out, "dilation.txt"), K, "dilation")
    bio.export_field(mu.values, src.mesh, os.path.join(cfg.out, "mu_abs.ply"), "ply-color", "abs_mu")
    if cfg.figures:
        from .plotting import plot_field

        plot_field(src, mu.values, _fig(cfg, "mu_abs.png"), "|mu|")
    return {"sup_mu": mu.sup_norm, "max_dilation": float(K.max())}


def task_reconstruct(cfg: RunConfig) -> dict:
    src = _load_a(cfg)
    mu = BeltramiCoefficient(bio.load_field(cfg.mu, src.n_vertices, 2), src)
    f = reconstruct(mu, src, cfg.schedule, quadrature=cfg.quadrature or DEFAULT_QUADRATURE)
    got = compute_bc(f, strict=False)
    _write_map(cfg, f, got)
    err = np.abs(got.values - mu.values)[src.active_vertices]
    if cfg.figures:
        from .plotting import plot_field, plot_map

        plot_map(src, f.values, _fig(cfg, "map.png"), "reconstructed map")
        plot_field(src, got.values, _fig(cfg, "mu_abs.png"), "|mu| of the reconstructed map")
    return {"mean_mu_error": float(err.mean()), "max_mu_error": float(err.max())}


def _finish_run(cfg: RunConfig, run, title, landmarks=None) -> dict:
    _write_map(cfg, run.map, run.mu)
    bio.write_trace(os.path.join(cfg.out, "trace.csv"), run.trace)
    if cfg.figures:
        from .plotting import plot_field, plot_map, plot_trace

        plot_trace(run.trace, _fig(cfg, "energy.png"), title)
        plot_field(run.map.source, run.mu.values, _fig(cfg, "mu_abs.png"), "|mu|")
        plot_map(run.map.source, run.map.values, _fig(cfg, "map.png"), "registration map", landmarks)
    info = {"termination": run.termination, "iterations": run.iteration,
            "energy_initial": float(run.energies[0]), "energy_final": float(run.energies[-1]),
            "optimizer_wall_time": run.wall_time}
    if run.termination == "step_failed" and run.iteration == 0:
        raise StepFailed("no admissible descent step from the initial map")
    return info


def task_register_features(cfg: RunConfig) -> dict:
    a, b = _load_a(cfg), _load_b(cfg)
    F1 = bio.load_field(cfg.feature_a, a.n_vertices, 1)
    F2 = bio.load_field(cfg.feature_b, b.n_vertices, 1)
    run = register_features(a, b, F1, F2, cfg.params)
    return _finish_run(cfg, run, "feature matching")


def task_register_landmarks(cfg: RunConfig) -> dict:
    a = _load_a(cfg)
    lm = bio.load_landmarks(cfg.landmarks, a.n_vertices)
    run = register_landmarks(a, lm, cfg.params)
    info = _finish_run(cfg, run, "landmark matching", lm)
    w = delta_mask(a, lm, cfg.params.mask_radius)
    bio.write_field(os.path.join(cfg.out, "mask.txt"), w, "mask")
    return info


def task_register_geometry(cfg: RunConfig) -> dict:
    a, b = _load_a(cfg), _load_b(cfg)
    run = register_geometry(a, b, cfg.params)
    return _finish_run(cfg, run, "geometric matching")


RUNNERS = {
    "extract-bc": task_extract_bc,
    "reconstruct": task_reconstruct,
    "register-features": task_register_features,
    "register-landmarks": task_register_landmarks,
    "register-geometry": task_register_geometry,
}


def versions() -> dict:
    import matplotlib
    import scipy

    return {"bhfreg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def run_task(cfg: RunConfig) -> dict:
    """Run one task, writing outputs and ``metadata.json`` into ``cfg.out``."""
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {cfg.out}: {exc.strerror or exc}") from exc
    t0 = time.perf_counter()
    info = RUNNERS[cfg.task](cfg)
    meta = {"config": cfg.as_dict(), "versions": versions(), "wall_time": time.perf_counter() - t0,
            "result": info}
    with open(os.path.join(cfg.out, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=str)
    return meta


# ---------------------------------------------------------------- synth

def synth(kind: str, out: str, seed: int = 0, size: int | None = None) -> str:
    """Write a synthetic fixture for ``kind`` plus a ``<kind>.cfg`` run config; returns its path."""
    from . import synthetic as syn
    from .registration import LandmarkSet

    os.makedirs(out, exist_ok=True)
    cfg = {"task": {"features": "register-features", "landmarks": "register-landmarks",
                    "geometry": "register-geometry", "reconstruct": "reconstruct"}[kind]}

    def put_a(e, tag="a"):
        bio.save_mesh(e.mesh, os.path.join(out, f"mesh_{tag}.obj"))
        bio.save_param(os.path.join(out, f"param_{tag}.txt"), e)
        cfg[f"mesh_{tag}"] = f"mesh_{tag}.obj"
        cfg[f"param_{tag}"] = f"param_{tag}.txt"

    if kind == "reconstruct":
        e = syn.disk_mesh(size or 1000, seed=seed)
        put_a(e)
        bio.write_field(os.path.join(out, "mu.txt"), np.full(e.n_vertices, 0.2 + 0j), "mu")
        cfg["mu"] = "mu.txt"
    elif kind == "features":
        a, b, F1, F2 = syn.feature_fixture()
        put_a(a)
        put_a(b, "b")
        bio.write_field(os.path.join(out, "feature_a.txt"), F1, "F1")
        bio.write_field(os.path.join(out, "feature_b.txt"), F2, "F2")
        cfg.update(feature_a="feature_a.txt", feature_b="feature_b.txt", max_iters=50)
    elif kind == "landmarks":
        e = syn.disk_mesh(size or 1000, seed=seed)
        put_a(e)
        bio.save_landmarks(os.path.join(out, "landmarks.txt"), LandmarkSet(syn.landmark_fixture(e, 1)))
        cfg["landmarks"] = "landmarks.txt"
    elif kind == "geometry":
        a, b = syn.sphere_pair()
        put_a(a)
        put_a(b, "b")
        cfg["max_iters"] = 100
    path = os.path.join(out, f"{kind}.cfg")
    bio.write_config(path, cfg)
    return path


# ---------------------------------------------------------------- argv

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("inputs")
    for k in PATH_KEYS:
        g.add_argument("--" + k.replace("_", "-"), dest=k, metavar="PATH")
    g.add_argument("--config", metavar="PATH", help="key=value run configuration")
    o = common.add_argument_group("run")
    o.add_argument("--out", help="output directory (default: out)")
    o.add_argument("--seed", type=int)
    o.add_argument("--n-steps", dest="n_steps", type=int, help="flow steps per reconstruction")
    o.add_argument("--dt", type=float)
    o.add_argument("--alpha", type=float)
    o.add_argument("--beta", type=float)
    o.add_argument("--gamma", type=float)
    o.add_argument("--max-iters", dest="max_iters", type=int)
    o.add_argument("--epsilon", type=float)
    o.add_argument("--delta-margin", dest="delta_margin", type=float)
    o.add_argument("--mask-radius", dest="mask_radius", type=float)
    o.add_argument("--quadrature", choices=QUADRATURES)
    o.add_argument("--no-figures", action="store_true")
    o.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="bhfreg", description="Quasiconformal surface registration with Beltrami coefficients.")
    p.add_argument("--version", action="version", version=f"bhfreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for t in TASKS:
        sub.add_parser(t, parents=[common])
    s = sub.add_parser("synth", help="write a synthetic fixture and its run config")
    s.add_argument("kind", choices=SYNTH_KINDS)
    s.add_argument("--out", default="fixtures")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--size", type=int)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "synth":
            print(synth(args.kind, args.out, args.seed, args.size))
            return 0
        cfg = build_config(args.command, args)
        meta = run_task(cfg)
        print(json.dumps(meta["result"], default=str))
        return 0
    except InputError as exc:
        print(f"error_code={exc.code} {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error_code={exc.code} {exc}", file=sys.stderr)
        return 3
    except BHFError as exc:
        print(f"error_code={exc.code} {exc}", file=sys.stderr)
        return 1


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
