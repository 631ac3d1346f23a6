"""Command-line interface.

Subcommands: ``analyze``, ``witness``, ``gradcheck``, ``genbound``,
``train``, ``plot``.  Exit codes: 0 on success, 1 on contract violations
(shape/config/data errors, failed checks), 2 on usage errors.  Every command
is deterministic for a fixed ``--seed`` (falling back to the ``LIPCAP_SEED``
environment variable, then 0); outputs carry no timestamps.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import capacity_report
from .datasets import gaussian_blobs
from .errors import ConfigError, ShapeError
from .genbound import generalization_bound
from .gradcheck import gradient_check_battery
from .lipestimate import Region, directional_quotient, sampled_lipschitz
from .modelio import (
    capacity_report_to_dict,
    genbound_report_to_dict,
    load_dataset_csv,
    load_model,
    load_trace_csv,
    save_dataset_csv,
    save_model,
    save_trace_csv,
    write_json,
)
from .network import forward, forward_batch
from .svgplot import PANELS, emit_svg_plot
from .trainer import TrainConfig, build_mlp, one_hot, train
from .witness import WitnessCfg, build_input_witness


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("LIPCAP_SEED")
    return int(env) if env else 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"{flag} expects a comma-separated integer list, got {text!r}")


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"{flag} expects a comma-separated number list, got {text!r}")


def _load_targets(path):
    X, y, vector = load_dataset_csv(path)
    if vector:
        return X, y
    return X, one_hot(y, int(y.max()) + 1)


def _cmd_analyze(args) -> int:
    spec = load_model(args.model)
    data = None
    if args.data:
        data, _, _ = load_dataset_csv(args.data)
    report = capacity_report(spec, data=data, alpha=args.alpha)
    write_json(args.out, capacity_report_to_dict(report))
    print(f"analyze: P_w={report.pw!r} input_upper={report.input_upper!r} -> {args.out}")
    return 0


def _cmd_witness(args) -> int:
    widths = _parse_int_list(args.widths, "--widths")
    scales = _parse_float_list(args.a, "--a")
    cfg = WitnessCfg(widths=tuple(widths), a=tuple(scales))
    spec, exact = build_input_witness(cfg)
    model_path = f"{args.out}.model.json"
    verify_path = f"{args.out}.verify.json"
    save_model(spec, model_path)

    x0 = np.ones(spec.input_dim)
    e1 = np.zeros(spec.input_dim)
    e1[0] = 1.0
    oracle = directional_quotient(lambda v: forward(spec, v), x0, e1, step=1.0)
    region = Region.cube(0.5, 1.5, spec.input_dim)
    est = sampled_lipschitz(
        lambda P: forward_batch(spec, P), region, n_pairs=args.pairs, seed=_resolve_seed(args.seed)
    )
    residual = abs(oracle - exact) / max(1.0, exact)
    write_json(
        verify_path,
        {
            "kind": "witness-verification",
            "widths": widths,
            "a": scales,
            "analytic": {"value": exact, "provenance": "analytic"},
            "oracle_directional": {"value": oracle, "provenance": "sampled"},
            "sampled_lipschitz": {"value": est.value, "provenance": "sampled"},
            "residual": {"value": residual, "provenance": "sampled"},
        },
    )
    print(
        f"witness: analytic={exact!r} oracle={oracle!r} residual={residual!r} "
        f"-> {model_path}, {verify_path}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    results = gradient_check_battery(args.n, seed=_resolve_seed(args.seed), tol=args.tol)
    print(f"{'#':>4} {'normalizer':<10} {'loss':<5} {'rel_error':>12} result")
    failures = 0
    for i, r in enumerate(results):
        status = "pass" if r.passed else "FAIL"
        failures += not r.passed
        print(f"{i:>4} {r.norm_mode:<10} {r.loss:<5} {r.rel_error:>12.3e} {status}")
    print(f"gradcheck: {len(results) - failures}/{len(results)} passed (tol {args.tol:g})")
    if args.out:
        write_json(
            args.out,
            {
                "kind": "gradcheck",
                "tol": args.tol,
                "checks": [
                    {
                        "norm": r.norm_mode,
                        "loss": r.loss,
                        "rel_error": r.rel_error,
                        "passed": r.passed,
                    }
                    for r in results
                ],
            },
        )
    return 1 if failures else 0


def _cmd_genbound(args) -> int:
    spec = load_model(args.model)
    train_x, train_t = _load_targets(args.data)
    eval_x, eval_t = _load_targets(args.eval)
    report = generalization_bound(
        spec,
        train_x,
        train_t,
        eval_x,
        eval_t,
        bins=args.bins,
        delta=args.delta,
        capacity_c=args.capacity_C,
        pairs_per_cell=args.pairs,
        seed=_resolve_seed(args.seed),
    )
    write_json(args.out, genbound_report_to_dict(report))
    print(
        f"genbound: F_emp={report.f_emp!r} local={report.local_term!r} "
        f"g={report.g_value!r} total={report.total!r} -> {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.data:
        X, T = _load_targets(args.data)
    else:
        X, labels = gaussian_blobs(args.samples, classes=3, dim=2, seed=seed)
        T = one_hot(labels, 3)
    if args.model:
        spec = load_model(args.model)
    else:
        widths = _parse_int_list(args.widths, "--widths")
        spec = build_mlp([X.shape[1]] + widths + [T.shape[1]], norm=args.norm, seed=seed)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        weight_decay=args.weight_decay,
        seed=seed,
        optimizer=args.optimizer,
        loss=args.loss,
    )
    final, trace = train(spec, X, T, cfg)
    trace_path = f"{args.out}.trace.csv"
    model_path = f"{args.out}.model.json"
    save_trace_csv(trace, trace_path)
    save_model(final, model_path)
    print(
        f"train: {len(trace)} steps, final loss {trace.train_loss[-1]!r}, "
        f"final P_w {trace.pw[-1]!r} -> {trace_path}, {model_path}"
    )
    return 0


def _cmd_plot(args) -> int:
    trace = load_trace_csv(args.data)
    panels = args.panels.split(",") if args.panels else list(PANELS)
    svg = emit_svg_plot(trace, panels=panels, log_y=args.log_y or None)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"plot: {len(panels)} panel(s) -> {args.out}")
    return 0


def _cmd_dataset(args) -> int:
    X, labels = gaussian_blobs(
        args.samples, classes=args.classes, dim=args.dim, seed=_resolve_seed(args.seed)
    )
    save_dataset_csv(args.out, X, labels=labels)
    print(f"dataset: {args.samples} samples, {args.classes} classes -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lipcap",
        description="Capacity diagnostics for normalized feedforward networks.",
    )
    p.add_argument("--version", action="version", version=f"lipcap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="capacity report for a model file")
    a.add_argument("--model", required=True)
    a.add_argument("--data", help="dataset CSV for the activation sups")
    a.add_argument("--alpha", type=float, help="emit optimization constants for this accuracy")
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_analyze)

    w = sub.add_parser("witness", help="build and verify an input-Lipschitz witness")
    w.add_argument("--widths", required=True, help="comma list n_0,...,n_K")
    w.add_argument("--a", required=True, help="comma list of layer scales a_1,...,a_K")
    w.add_argument("--pairs", type=int, default=2000)
    w.add_argument("--seed", type=int)
    w.add_argument("--out", required=True, help="output prefix")
    w.set_defaults(func=_cmd_witness)

    g = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    g.add_argument("--n", type=int, default=50, help="number of random checks")
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="optional JSON result file")
    g.set_defaults(func=_cmd_gradcheck)

    b = sub.add_parser("genbound", help="evaluate the partitioned generalization bound")
    b.add_argument("--model", required=True)
    b.add_argument("--data", required=True, help="training CSV")
    b.add_argument("--eval", required=True, help="held-out CSV")
    b.add_argument("--bins", type=int, default=4)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--capacity-C", type=float, required=True, dest="capacity_C")
    b.add_argument("--pairs", type=int, default=2000, help="sampled pairs per cell")
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_genbound)

    t = sub.add_parser("train", help="train an instrumented network")
    t.add_argument("--data", help="training CSV (default: seeded blobs)")
    t.add_argument("--model", help="initial model file (default: fresh network)")
    t.add_argument("--widths", default="32,32,32,32,32", help="hidden widths")
    t.add_argument("--norm", default="none", choices=["none", "bn", "ln", "gn"])
    t.add_argument("--epochs", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    t.add_argument("--loss", default="l1", choices=["l1", "mse"])
    t.add_argument("--samples", type=int, default=3000, help="blob samples when no --data")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="output prefix")
    t.set_defaults(func=_cmd_train)

    pl = sub.add_parser("plot", help="render trace panels as SVG")
    pl.add_argument("--data", required=True, help="trace CSV")
    pl.add_argument("--panels", help=f"comma list from {','.join(PANELS)}")
    pl.add_argument("--log-y", action="store_true")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)

    d = sub.add_parser("dataset", help="write a seeded synthetic dataset CSV")
    d.add_argument("--samples", type=int, default=1000)
    d.add_argument("--classes", type=int, default=3)
    d.add_argument("--dim", type=int, default=2)
    d.add_argument("--seed", type=int)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_dataset)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
