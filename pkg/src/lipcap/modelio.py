"""File formats: model JSON, dataset CSV, trace CSV, and report JSON.

Floats are rendered with Python's shortest round-trip representation, so
serializing and parsing reproduces every 64-bit value exactly and identical
inputs always produce byte-identical files.  Field order is fixed.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .bounds import CapacityReport
from .errors import ConfigError, ShapeError
from .genbound import GenBoundReport
from .network import Activation, LayerSpec, NetworkSpec, validate_network
from .normalizers import NormalizerCfg
from .trainer import TrainTrace

MODEL_VERSION = 1

TRACE_COLUMNS = [
    "step",
    "epoch",
    "layer",
    "w_norm",
    "pw_product",
    "var_mean",
    "var_max",
    "inv_sigma_product",
    "train_acc",
    "train_loss",
]


def _norm_to_dict(cfg: NormalizerCfg) -> dict:
    out: dict = {"kind": cfg.kind}
    if cfg.kind == "none":
        return out
    out["eps"] = cfg.params.eps
    if cfg.kind == "bn":
        out["mu"] = [float(v) for v in cfg.params.mu]
        out["sigma2"] = [float(v) for v in cfg.params.sigma2]
    elif cfg.kind == "gn":
        out["groups"] = [list(g) for g in cfg.params.groups]
    if cfg.kind in ("ln", "gn") and cfg.sigma_min is not None:
        sm = np.atleast_1d(np.asarray(cfg.sigma_min, dtype=np.float64))
        out["sigma_min"] = float(sm[0]) if sm.size == 1 else [float(v) for v in sm]
    return out


def _norm_from_dict(d: dict) -> NormalizerCfg:
    kind = d.get("kind", "none")
    if kind == "none":
        return NormalizerCfg.none()
    eps = float(d["eps"])
    if kind == "bn":
        return NormalizerCfg.bn(d["mu"], d["sigma2"], eps=eps)
    sigma_min = d.get("sigma_min")
    if kind == "ln":
        return NormalizerCfg.ln(eps=eps, sigma_min=sigma_min)
    if kind == "gn":
        return NormalizerCfg.gn([tuple(g) for g in d["groups"]], eps=eps, sigma_min=sigma_min)
    raise ConfigError(f"unknown normalizer kind {kind!r}")


def model_to_dict(spec: NetworkSpec) -> dict:
    layers = []
    for layer in spec.layers:
        rec = {
            "rows": layer.out_dim,
            "cols": layer.in_dim,
            "weights": [float(v) for v in layer.W.ravel()],
            "activation": layer.activation.value,
            "norm": _norm_to_dict(layer.norm),
        }
        if layer.s_bound is not None:
            rec["s_bound"] = float(layer.s_bound)
        layers.append(rec)
    return {"version": MODEL_VERSION, "input_dim": spec.input_dim, "layers": layers}


def model_from_dict(d: dict) -> NetworkSpec:
    if d.get("version") != MODEL_VERSION:
        raise ConfigError(f"unsupported model version {d.get('version')!r}")
    layers = []
    for i, rec in enumerate(d["layers"], start=1):
        rows, cols = int(rec["rows"]), int(rec["cols"])
        w = np.asarray(rec["weights"], dtype=np.float64)
        if w.size != rows * cols:
            raise ShapeError(
                f"layer {i}: expected {rows * cols} weights, got {w.size}"
            )
        layers.append(
            LayerSpec(
                W=w.reshape(rows, cols),
                norm=_norm_from_dict(rec.get("norm", {"kind": "none"})),
                activation=Activation(rec["activation"]),
                s_bound=rec.get("s_bound"),
            )
        )
    return validate_network(NetworkSpec(input_dim=int(d["input_dim"]), layers=layers))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def save_model(spec: NetworkSpec, path) -> None:
    write_json(path, model_to_dict(spec))


def load_model(path) -> NetworkSpec:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def specs_equal(a: NetworkSpec, b: NetworkSpec) -> bool:
    """Bit-exact structural equality of two network specs."""
    if a.input_dim != b.input_dim or a.depth != b.depth:
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.W.shape != lb.W.shape or not np.array_equal(la.W, lb.W):
            return False
        if la.activation != lb.activation or la.s_bound != lb.s_bound:
            return False
        if _norm_to_dict(la.norm) != _norm_to_dict(lb.norm):
            return False
    return True


def save_dataset_csv(path, X, labels=None, targets=None) -> None:
    """Write features plus either an integer label column or target columns."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("X must be a 2-d array")
    if (labels is None) == (targets is None):
        raise ValueError("provide exactly one of labels / targets")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        header = [f"x{j}" for j in range(X.shape[1])]
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            w.writerow(header + ["y"])
            for row, lab in zip(X, labels):
                w.writerow([repr(float(v)) for v in row] + [int(lab)])
        else:
            T = np.asarray(targets, dtype=np.float64)
            w.writerow(header + [f"y{j}" for j in range(T.shape[1])])
            for row, t in zip(X, T):
                w.writerow([repr(float(v)) for v in row] + [repr(float(v)) for v in t])


def load_dataset_csv(path) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Read a dataset CSV.

    Returns ``(X, y, vector)``: ``vector`` is False for an integer label
    column ``y`` and True for target columns ``y0..y{k-1}``.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty dataset file")
        x_cols = [i for i, name in enumerate(header) if name.startswith("x")]
        y_cols = [i for i, name in enumerate(header) if name.startswith("y")]
        if not x_cols or not y_cols:
            raise ValueError(f"{path}: header must contain x* and y* columns")
        vector = header[y_cols[0]] != "y"
        xs, ys = [], []
        for row in reader:
            if not row:
                continue
            xs.append([float(row[i]) for i in x_cols])
            ys.append([float(row[i]) for i in y_cols])
    if not xs:
        raise ValueError(f"{path}: no data rows")
    X = np.asarray(xs, dtype=np.float64)
    Y = np.asarray(ys, dtype=np.float64)
    if not vector:
        return X, Y[:, 0].astype(np.int64), False
    return X, Y, True


def save_trace_csv(trace: TrainTrace, path) -> None:
    """One row per (step, layer), fixed column order."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(TRACE_COLUMNS)
        for r in range(len(trace)):
            for l in range(trace.w_norms[r].size):
                w.writerow(
                    [
                        trace.steps[r],
                        trace.epochs[r],
                        l + 1,
                        repr(float(trace.w_norms[r][l])),
                        repr(float(trace.pw[r])),
                        repr(float(trace.var_mean[r][l])),
                        repr(float(trace.var_max[r][l])),
                        repr(float(trace.inv_sigma_product[r])),
                        repr(float(trace.train_acc[r])),
                        repr(float(trace.train_loss[r])),
                    ]
                )


def load_trace_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (unexpected header)")
        cols: Dict[str, list] = {name: [] for name in TRACE_COLUMNS}
        for row in reader:
            if not row:
                continue
            for name, val in zip(TRACE_COLUMNS, row):
                cols[name].append(float(val))
    if not cols["step"]:
        raise ValueError(f"{path}: trace has no rows")
    return {name: np.asarray(vals) for name, vals in cols.items()}


def _val(value, provenance: str) -> dict:
    return {"value": value, "provenance": provenance}


def capacity_report_to_dict(report: CapacityReport) -> dict:
    layers = []
    for i in range(report.w_norms.size):
        rec = {
            "layer": i + 1,
            "w_norm": _val(float(report.w_norms[i]), "analytic"),
            "norm_factor": _val(float(report.norm_factors[i]), "analytic"),
        }
        if report.w_bounds is not None:
            rec["y_lipschitz_upper"] = _val(float(report.y_bounds[i]), "analytic")
            rec["w_lipschitz_upper"] = _val(float(report.w_bounds[i]), "estimated")
            rec["loss_w_lipschitz_upper"] = _val(
                float(report.loss_w_bounds[i]), "estimated"
            )
        layers.append(rec)
    out = {
        "kind": "capacity",
        "layers": layers,
        "pw": _val(report.pw, "analytic"),
        "input_lipschitz_upper": _val(report.input_upper, "analytic"),
        "reduction": {
            "per_layer": [float(v) for v in report.reduction.per_layer],
            "tight": _val(report.reduction.tight, "analytic"),
            "coarse": _val(report.reduction.coarse, "analytic"),
            "sigma_floor": report.reduction.sigma_floor,
            "normalized_layers": report.reduction.normalized_layers,
        },
    }
    if report.a_sup is not None:
        out["activation_sup"] = {
            "values": [float(v) for v in report.a_sup],
            "provenance": "estimated",
        }
    if report.optimization is not None:
        out["optimization"] = {
            "alpha": report.alpha,
            "note": "order constants, not absolute iteration counts",
            "layers": [
                {
                    "layer": c.layer,
                    "iteration_lower": _val(c.iteration_lower, "analytic"),
                    "evals_unnormalized": _val(c.evals_unnormalized, "analytic"),
                    "evals_normalized": _val(c.evals_normalized, "analytic"),
                }
                for c in report.optimization
            ],
        }
    return out


def genbound_report_to_dict(report: GenBoundReport) -> dict:
    out = {
        "kind": "genbound",
        "f_emp": _val(report.f_emp, "analytic"),
        "local_term": _val(report.local_term, "estimated"),
        "g_term": _val(report.g_value, "analytic"),
        "total": _val(report.total, "estimated"),
        "delta": report.delta,
        "capacity_c": report.capacity_c,
        "m": report.m,
        "n_cells": report.n_cells,
        "t_size": report.t_size,
        "estimated": report.estimated,
        "cells": [
            {
                "index": c.index,
                "m_i": c.m_i,
                "lambda_i": _val(c.lambda_i, "estimated"),
                "l_i": _val(c.l_i, "sampled"),
                "lo": [float(v) for v in c.lo],
                "hi": [float(v) for v in c.hi],
            }
            for c in report.cells
        ],
    }
    if report.eval_loss is not None:
        out["eval_loss"] = _val(report.eval_loss, "sampled")
    if report.excluded_cells:
        out["excluded_cells"] = {
            "indices": list(report.excluded_cells),
            "note": "cells assumed to carry zero data mass; no sample fell in them",
        }
    if report.normalized is not None:
        nf = report.normalized
        out["normalized"] = {
            "omega": _val(nf.omega, "estimated"),
            "unnormalized_form": _val(nf.unnormalized_form, "estimated"),
            "tight_form": _val(nf.tight_form, "estimated"),
            "coarse_form": _val(nf.coarse_form, "estimated"),
            "note": nf.note,
        }
    return out
