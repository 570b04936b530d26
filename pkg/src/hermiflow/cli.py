"""Experiment runner: config-driven flow sweeps with CSV/JSON outputs.

A config is a single JSON tree (one file per experiment).  Every output file
embeds the config hash and the cell seed in a comment line, numbers are
written in shortest round-trip form, and the counter-based generator makes
re-runs byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import os
import sys

import numpy as np

from . import flow as fl
from . import function_space as fs
from . import landscape as ls
from . import structure as st
from .errors import NonFiniteState, StepRejected, UnknownScenario

GALLERY_NAMES = (
    "cascade_example",
    "recombination",
    "two_stage",
    "planted_radial",
    "planted_failure",
    "bad_subspace",
)


def gallery(name: str, s: int = None, eps: float = None) -> ls.Target:
    """Named targets used across the experiments.

    cascade_example: the q=4 polynomial with the four-stage fine cascade.
    recombination:   the q=2 target whose first learned direction is the
                     diagonal (1,1)/sqrt(2).
    two_stage:       h2(x1) + h3(x2), the timescale-law target.
    planted_radial:  (h2(x1) + h2(x2))/sqrt(2).
    planted_failure: radial part plus eps-weighted ridge sum over the 5th
                     roots of unity with weights (2,1,1,1,1).
    bad_subspace:    pure ridge sum with the nearly negative autocorrelation
                     weights at N = 8.
    """
    if name == "cascade_example":
        f = (
            fs.basis(4, (2, 0, 0, 0))
            + fs.basis(4, (0, 4, 0, 0))
            + fs.basis(4, (6, 0, 1, 0))
            + fs.basis(4, (3, 0, 5, 3))
        )
        return ls.coefficient_target(f)
    if name == "recombination":
        r = 1.0 / np.sqrt(2.0)
        f = fs.from_coeffs(
            2, {(1, 0): r, (0, 1): r, (2, 0): 0.5, (0, 2): 0.5, (1, 1): -1.0}
        )
        return ls.coefficient_target(f)
    if name == "two_stage":
        return ls.coefficient_target(fs.basis(2, (2, 0)) + fs.basis(2, (0, 3)))
    if name == "planted_radial":
        r = 1.0 / np.sqrt(2.0)
        return ls.coefficient_target(
            fs.from_coeffs(2, {(2, 0): r, (0, 2): r})
        )
    if name == "planted_failure":
        N = 5
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        if s is None:
            s = failure_degree(N)
        dirs = ls.roots_of_unity(N)
        r = 1.0 / np.sqrt(2.0)
        f = fs.from_coeffs(2, {(2, 0): r, (0, 2): r})
        if eps is None:
            g_norm2 = ls.autocorrelation_phi(Z, s, 0.0)
            eps = ls.failure_epsilon(N, s, f.norm2(), g_norm2)
        return ls.mixed_target(f, Z, dirs, s, eps)
    if name == "bad_subspace":
        N = 8
        Z = ls.negative_autocorrelation_sequence(N)
        if s is None:
            s = 8 * N * N
        return ls.ridge_target(Z, ls.roots_of_unity(N), s)
    raise UnknownScenario(f"unknown gallery target {name!r}")


def failure_degree(N: int) -> int:
    """Smallest even s with cos(pi/10N)^s <= 1/(10 N^2)."""
    s = int(np.ceil(np.log(1.0 / (10.0 * N * N)) / np.log(np.cos(np.pi / (10.0 * N)))))
    return s + (s % 2)


def build_target(spec: dict) -> ls.Target:
    kind = spec.get("kind", "gallery")
    if kind == "gallery":
        return gallery(
            spec["name"], s=spec.get("s"), eps=spec.get("eps")
        )
    if kind == "coeffs":
        terms = {tuple(beta): float(a) for beta, a in spec["terms"]}
        return ls.coefficient_target(fs.from_coeffs(int(spec["q"]), terms))
    if kind == "ridge":
        return ls.ridge_target(
            np.asarray(spec["Z"], dtype=float),
            np.asarray(spec["dirs"], dtype=float),
            int(spec["s"]),
        )
    raise UnknownScenario(f"unknown target kind {kind!r}")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def validate_config(config: dict) -> dict:
    dims = config.get("dims", [])
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be strictly increasing")
    if int(config.get("seeds", 1)) < 1:
        raise ValueError("seeds must be >= 1")
    if config.get("model", "grassmann") not in ("grassmann", "stiefel"):
        raise ValueError("model must be 'grassmann' or 'stiefel'")
    return config


def _embed_frame(d: int, q: int) -> np.ndarray:
    """Canonical planted frame: first q coordinate directions."""
    return np.eye(d)[:, :q]


def _run_cell(args):
    """Worker for one (dimension, seed) cell; returns serializable results."""
    config, d, seed = args
    try:
        return _run_cell_inner(config, d, seed)
    except (NonFiniteState, StepRejected) as exc:
        raise type(exc)(f"cell d={d} seed={seed}: {exc}") from exc


def _run_cell_inner(config, d, seed):
    target = build_target(config["target"])
    q = target.q
    model = config.get("model", "grassmann")
    r = int(config.get("r", q))
    fcfg = dict(config.get("flow", {}))
    t_max = fcfg.pop("t_max", None)
    s_star = config.get("_s_star", 2)
    if t_max is None:
        t_max = 50.0 * d ** max(s_star - 1, 0)
    eta = float(fcfg.pop("eta", 0.25))
    cfg = fl.FlowConfig(t_max=float(t_max), eta=eta, seed=seed, **fcfg)
    Wstar = _embed_frame(d, q)
    W0 = fl.init_uniform(d, r, seed)
    trace = fl.integrate(model, target, Wstar, W0, cfg)
    S = ls.summary(Wstar, trace.final_W)
    subspace_err2 = float(
        np.linalg.norm(
            trace.final_W @ trace.final_W.T - Wstar @ Wstar.T
        )
        ** 2
    ) if r == q else None
    final_loss = (
        ls.grassmann_loss(target, S)
        if model == "grassmann"
        else ls.planted_loss(target, S)
    )
    return {
        "d": d,
        "seed": seed,
        "csv": trace.to_csv(),
        "final_lambda": [float(v) for v in S.lam],
        "final_loss": final_loss,
        "final_grad_norm": float(trace.grad_norms[-1]),
        "subspace_err2": subspace_err2,
        "lambdas": trace.lambdas.tolist(),
        "times": trace.times.tolist(),
    }


def run(config_path: str, out_dir: str = None, workers: int = None, base_seed: int = None) -> int:
    try:
        with open(config_path) as fh:
            config = validate_config(json.load(fh))
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = out_dir or config.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    chash = config_hash(config)
    target = build_target(config["target"])
    eta = float(config.get("flow", {}).get("eta", 0.25))

    cascade = None
    if target.f is not None and target.kind == "coeffs":
        cascade = st.leap_decomposition(target.f)
        with open(os.path.join(out, "cascade.json"), "w") as fh:
            doc = json.loads(cascade.to_json())
            doc["config_hash"] = chash
            json.dump(doc, fh, indent=2)
        config["_s_star"] = cascade.s_star
    else:
        config["_s_star"] = 2

    dims = config.get("dims", [int(config.get("d", 16))])
    n_seeds = int(config.get("seeds", 1))
    seed0 = base_seed if base_seed is not None else int(config.get("base_seed", 0))
    cells = [
        (config, int(d), seed0 + i) for d in dims for i in range(n_seeds)
    ]

    nworkers = workers or min(len(cells), multiprocessing.cpu_count())
    try:
        if nworkers > 1 and len(cells) > 1:
            with multiprocessing.Pool(nworkers) as pool:
                results = pool.map(_run_cell, cells)
        else:
            results = [_run_cell(c) for c in cells]
    except (NonFiniteState, StepRejected) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    escapes = {}
    summary_rows = []
    for res in results:
        d, seed = res["d"], res["seed"]
        name = f"trace_d{d}_s{seed}.csv"
        header = f"config_hash={chash} d={d} seed={seed}"
        with open(os.path.join(out, name), "w") as fh:
            body = res["csv"].split("\n", 1)
            fh.write("# " + header + "\n" + res["csv"])
        if cascade is not None:
            trace = fl.FlowTrace(
                times=np.array(res["times"]),
                losses=np.zeros(len(res["times"])),
                lambdas=np.array(res["lambdas"]),
                grad_norms=np.zeros(len(res["times"])),
                seed=seed,
            )
            escapes[f"d={d},seed={seed}"] = fl.escape_times(trace, cascade, eta)
        summary_rows.append(
            {
                "d": d,
                "seed": seed,
                "final_lambda": res["final_lambda"],
                "final_loss": res["final_loss"],
                "final_grad_norm": res["final_grad_norm"],
                "subspace_err2": res["subspace_err2"],
            }
        )

    with open(os.path.join(out, "escapes.json"), "w") as fh:
        json.dump(
            {"config_hash": chash, "eta": eta, "escapes": escapes},
            fh,
            indent=2,
        )

    results_doc = {"config_hash": chash, "cells": summary_rows}
    if target.kind == "mixed":
        # trapped-fraction report: runs whose ridge correlation ends at
        # least 2/3 below its peak value, in eps-rescaled units
        import numpy as _np

        phi0 = ls.autocorrelation_phi(target.ridge_Z, target.ridge_s, 0.0)
        trapped = 0
        for row in summary_rows:
            radial = 0.5 * float(_np.sum(_np.array(row["final_lambda"]) ** 2))
            phi_eff = (row["final_loss"] - radial) / target.eps
            if phi_eff <= phi0 - 2.0 / 3.0:
                trapped += 1
        results_doc["trapped_fraction"] = trapped / len(summary_rows)
        results_doc["phi_peak"] = phi0
        results_doc["eps"] = target.eps
    with open(os.path.join(out, "results.json"), "w") as fh:
        json.dump(results_doc, fh, indent=2)

    if cascade is not None and len(dims) >= 3:
        fits = _fit_escapes(escapes, cascade, dims, n_seeds, seed0)
        with open(os.path.join(out, "fit.json"), "w") as fh:
            json.dump({"config_hash": chash, "fits": fits}, fh, indent=2)
    return 0


def _fit_escapes(escapes, cascade, dims, n_seeds, seed0):
    fits = {}
    for k in range(1, len(cascade.regrouped) + 1):
        med = {}
        for d in dims:
            taus = [
                escapes.get(f"d={d},seed={seed0 + i}", {}).get(k)
                for i in range(n_seeds)
            ]
            taus = [t if t is not None else np.inf for t in taus]
            med[d] = float(np.median(taus))
        if all(np.isfinite(v) for v in med.values()):
            slope, stderr = fl.fit_exponent(med)
            fits[str(k)] = {
                "medians": med,
                "slope": slope,
                "stderr": stderr,
            }
        else:
            fits[str(k)] = {"medians": med, "slope": None, "stderr": None}
    return fits


def fit_cmd(escapes_path: str) -> int:
    with open(escapes_path) as fh:
        data = json.load(fh)
    stages = set()
    for cell in data["escapes"].values():
        stages.update(cell.keys())
    for k in sorted(stages):
        med = {}
        for key, cell in data["escapes"].items():
            if k not in cell:
                continue
            d = int(key.split(",")[0].split("=")[1])
            med.setdefault(d, []).append(cell[k])
        med = {d: float(np.median(v)) for d, v in med.items()}
        try:
            slope, stderr = fl.fit_exponent(med)
            print(f"stage {k}: slope={slope:.4f} stderr={stderr:.4f} medians={med}")
        except Exception as exc:
            print(f"stage {k}: fit failed ({exc})")
    return 0


def check() -> int:
    """Fast invariant battery: algebra identities on random inputs."""
    rng = np.random.default_rng(0)
    failures = []

    def rand_fun(q, deg, n=5):
        from . import tensor_index as ti

        idx = []
        for k in range(deg + 1):
            idx += ti.enumerate_degree(q, k)
        pick = rng.choice(len(idx), size=min(n, len(idx)), replace=False)
        return fs.from_coeffs(q, {idx[i]: rng.normal() for i in pick})

    def rand_contraction(q):
        A = rng.normal(size=(q, q))
        return A / (np.linalg.norm(A, 2) * (1.0 + rng.uniform(0, 0.5)))

    def rand_orth(q):
        Q, R = np.linalg.qr(rng.normal(size=(q, q)))
        return Q * np.sign(np.diag(R))

    for trial in range(20):
        q = int(rng.integers(2, 4))
        f = rand_fun(q, 5)
        g = rand_fun(q, 5)
        M, N = rand_contraction(q), rand_contraction(q)
        U = rand_orth(q)
        semi = (fs.average(fs.average(f, N), M) - fs.average(f, M @ N)).norm()
        adj = abs(
            fs.inner(fs.average(f, M), g) - fs.inner(f, fs.average(g, M.T))
        )
        iso = abs(fs.rotate(f, U).norm() - f.norm())
        for name, err in (("semigroup", semi), ("adjoint", adj), ("isometry", iso)):
            if err > 1e-9:
                failures.append(f"{name} trial {trial}: err={err}")
    for line in failures:
        print("FAIL", line)
    print("check:", "FAIL" if failures else "PASS", f"({20} trials)")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hermiflow", description="multi-index gradient-flow experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)

    p_gal = sub.add_parser("gallery", help="inspect named targets")
    p_gal.add_argument("name", nargs="?", default=None)
    p_gal.add_argument("--list", action="store_true")

    p_fit = sub.add_parser("fit", help="fit escape-time exponents")
    p_fit.add_argument("escapes")

    sub.add_parser("check", help="run the invariant suite")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, out_dir=args.out, workers=args.workers, base_seed=args.seed)
    if args.command == "gallery":
        if args.list or args.name is None:
            for name in GALLERY_NAMES:
                print(name)
            return 0
        t = gallery(args.name)
        print(f"kind={t.kind} q={t.q}")
        if t.f is not None:
            print(fs.to_text(t.f), end="")
        if t.ridge_Z is not None:
            print(f"ridge: N={len(t.ridge_Z)} s={t.ridge_s} eps={t.eps}")
            print("Z =", list(t.ridge_Z))
        return 0
    if args.command == "fit":
        return fit_cmd(args.escapes)
    if args.command == "check":
        return check()
    return 2


if __name__ == "__main__":
    sys.exit(main())
