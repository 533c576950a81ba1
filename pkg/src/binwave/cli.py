"""Config-driven command line tying the pipeline together.

Every subcommand reads one JSON config (``--config``), draws all randomness
from a single seed, and writes machine-readable outputs into ``--out``: a
resolved-config echo, a ``summary.json``, and per-replicate CSV tables where
the command produces them.  Each output file embeds the hash of the resolved
config and the seed, so results stay attributable to the exact inputs that
produced them.  Progress goes to the diagnostic stream; stdout carries only
the summary JSON.

Exit codes: 0 success, 1 invalid configuration (nothing written), 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .confidence import ConfidenceConfig, build_confidence_ball
from .data import Dataset
from .estimators import (
    DEFAULT_DENSITY_THRESHOLD,
    DEFAULT_REGRESSION_THRESHOLD,
    ClassParams,
    estimate_density,
    estimate_regression,
)
from .gof import CompositeTestConfig, SimpleTestConfig, composite_test, simple_null_test
from .simulation import (
    CALIBRATION_KINDS,
    ModelSpec,
    calibrate,
    load_calibration,
    make_model,
    mc_coverage,
    mc_rate,
    mc_rejection_rate,
    sample_dataset,
)
from .wavelets import WaveletBasis, build_basis

__all__ = ["ConfigError", "main"]


class ConfigError(ValueError):
    """Configuration problem; the command exits with status 1."""


_REQUIRED = object()

_MAX_SEED = 2**64 - 1


# ---------------------------------------------------------------------------
# schema helpers: strict key checks, defaults materialized into the config


def _check_keys(sec: dict, allowed, where: str) -> None:
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _section(cfg: dict, key: str, where: str, required: bool = True) -> dict | None:
    if key not in cfg:
        if required:
            raise ConfigError(f"{where}.{key} is required")
        return None
    if not isinstance(cfg[key], dict):
        raise ConfigError(f"{where}.{key} must be a JSON object")
    return cfg[key]


def _as_float(cfg, key, where, default=_REQUIRED, lo=None, hi=None, lo_open=False):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        cfg[key] = default
    v = cfg[key]
    if v is None:
        if default is None:
            return None
        raise ConfigError(f"{where}.{key} must be a number")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(f"{where}.{key} must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        op = ">" if lo_open else ">="
        raise ConfigError(f"{where}.{key} must be {op} {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key} must be <= {hi}")
    cfg[key] = v
    return v


def _as_int(cfg, key, where, default=_REQUIRED, lo=None, hi=None):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        cfg[key] = default
    v = cfg[key]
    if v is None:
        if default is None:
            return None
        raise ConfigError(f"{where}.{key} must be an integer")
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key} must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key} must be <= {hi}")
    return v


def _as_str(cfg, key, where, default=_REQUIRED, choices=None):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        cfg[key] = default
    v = cfg[key]
    if not isinstance(v, str):
        raise ConfigError(f"{where}.{key} must be a string")
    if choices is not None and v not in choices:
        raise ConfigError(f"{where}.{key} must be one of {list(choices)}")
    return v


def _as_bool(cfg, key, where, default=_REQUIRED):
    if key not in cfg:
        if default is _REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        cfg[key] = default
    v = cfg[key]
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key} must be true or false")
    return v


# ---------------------------------------------------------------------------
# section parsers


_PARAMS_KEYS = (
    "beta_min", "beta_max", "gamma_min", "gamma_max", "M", "M_prime", "B_L", "B_U",
)
_BASIS_KEYS = ("family", "S", "R")
_MODEL_KEYS = ("f", "g", "beta", "gamma", "d", "resolution", "name")
_BUMP_KEYS = ("kind", "k", "eps", "signs", "sign_seed")
_SHELL_KEYS = ("kind", "level", "r")
_SIMPLE_TEST_KEYS = ("kind", "beta", "gamma", "alpha", "C", "calibration")
_COMPOSITE_TEST_KEYS = (
    "kind", "beta1", "beta2", "alpha", "zeta", "C_star",
    "density_threshold", "B_L_prime", "calibration",
)
_CONFIDENCE_KEYS = (
    "alpha", "zeta", "C_star", "slack_C", "C1", "C2", "M_star", "z_alpha",
    "density_threshold", "regression_threshold", "floor_ustat", "calibration",
)


def _parse_params(sec: dict, where: str) -> ClassParams:
    _check_keys(sec, _PARAMS_KEYS, where)
    vals = {k: _as_float(sec, k, where, lo=0.0, lo_open=True) for k in _PARAMS_KEYS}
    try:
        return ClassParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_basis(cfg: dict, where: str, d: int) -> WaveletBasis:
    sec = cfg.setdefault("basis", {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{where}.basis must be a JSON object")
    where = f"{where}.basis"
    _check_keys(sec, _BASIS_KEYS, where)
    family = _as_str(sec, "family", where, default="haar")
    S = _as_int(sec, "S", where, default=None, lo=1)
    R = _as_int(sec, "R", where, default=12, lo=2, hi=20)
    try:
        return build_basis(family, S, d=d, R=R)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _peek_dimension(sec: dict, where: str) -> int:
    # the basis needs d before the model can be assembled
    d = sec.get("d", 1)
    if isinstance(d, bool) or not isinstance(d, int) or not 1 <= d <= 3:
        raise ConfigError(f"{where}.d must be an integer in [1, 3]")
    return d


def _parse_model(sec: dict, where: str, basis: WaveletBasis) -> ModelSpec:
    _check_keys(sec, _MODEL_KEYS, where)
    d = _as_int(sec, "d", where, default=basis.d, lo=1, hi=3)
    if d != basis.d:
        raise ConfigError(f"{where}.d must match the basis dimension {basis.d}")
    beta = _as_float(sec, "beta", where, default=1.0, lo=0.0, lo_open=True)
    gamma = _as_float(sec, "gamma", where, default=1.0, lo=0.0, lo_open=True)
    res = _as_int(sec, "resolution", where, default=basis.table_res, lo=1, hi=20)
    f = sec.setdefault("f", "half")
    if isinstance(f, dict):
        kind = _as_str(f, "kind", f"{where}.f", choices=("bump", "shell"))
        if kind == "bump":
            _check_keys(f, _BUMP_KEYS, f"{where}.f")
            k = _as_int(f, "k", f"{where}.f", lo=1)
            _as_float(f, "eps", f"{where}.f", lo=0.0, lo_open=True)
            if "signs" in f:
                signs = f["signs"]
                if (
                    not isinstance(signs, list)
                    or len(signs) != k
                    or any(isinstance(s, bool) or s not in (-1, 1) for s in signs)
                ):
                    raise ConfigError(f"{where}.f.signs must be a list of k values in {{-1, 1}}")
            else:
                _as_int(f, "sign_seed", f"{where}.f", default=0, lo=0)
        else:
            _check_keys(f, _SHELL_KEYS, f"{where}.f")
            _as_int(f, "level", f"{where}.f", lo=0)
            _as_float(f, "r", f"{where}.f", lo=0.0, lo_open=True)
    elif isinstance(f, str):
        if f not in ("half", "smooth_step"):
            raise ConfigError(f"{where}.f must be 'half', 'smooth_step', or a constructor object")
    else:
        raise ConfigError(f"{where}.f must be a profile name or a constructor object")
    g = _as_str(sec, "g", where, default="uniform", choices=("uniform", "ramp"))
    if "name" in sec and not isinstance(sec["name"], str):
        raise ConfigError(f"{where}.name must be a string")
    try:
        model = make_model(
            f, g, beta=beta, gamma=gamma, d=d, resolution=res,
            basis=basis, name=sec.get("name"),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    sec.setdefault("name", model.name)
    return model


def _apply_calibration(sec: dict, allowed, where: str) -> None:
    """Fill constants from a referenced calibration file; explicit keys win."""
    if "calibration" not in sec:
        return
    path = _as_str(sec, "calibration", where)
    try:
        constants = load_calibration(path)["constants"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{where}.calibration: cannot use {path}: {exc}") from None
    if not isinstance(constants, dict):
        raise ConfigError(f"{where}.calibration: constants must be an object")
    for key, value in constants.items():
        if key in allowed and key not in sec:
            sec[key] = value


def _parse_test(sec: dict, where: str, params: ClassParams | None, kinds):
    default = kinds[0] if len(kinds) == 1 else _REQUIRED
    kind = _as_str(sec, "kind", where, default=default, choices=kinds)
    if kind == "simple":
        _check_keys(sec, _SIMPLE_TEST_KEYS, where)
        _apply_calibration(sec, _SIMPLE_TEST_KEYS, where)
        kwargs = dict(
            beta=_as_float(sec, "beta", where),
            gamma=_as_float(sec, "gamma", where),
            alpha=_as_float(sec, "alpha", where),
            C=_as_float(sec, "C", where),
        )
        maker = SimpleTestConfig
    else:
        if params is None:
            raise ConfigError(f"{where}: a composite test needs config.params")
        _check_keys(sec, _COMPOSITE_TEST_KEYS, where)
        _apply_calibration(sec, _COMPOSITE_TEST_KEYS, where)
        kwargs = dict(
            beta1=_as_float(sec, "beta1", where),
            beta2=_as_float(sec, "beta2", where),
            alpha=_as_float(sec, "alpha", where),
            zeta=_as_float(sec, "zeta", where, default=0.0),
            C_star=_as_float(sec, "C_star", where),
            params=params,
            density_threshold=_as_float(
                sec, "density_threshold", where, default=DEFAULT_DENSITY_THRESHOLD
            ),
            B_L_prime=_as_float(sec, "B_L_prime", where, default=None),
        )
        maker = CompositeTestConfig
    try:
        return maker(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_confidence(
    sec: dict, where: str, params: ClassParams, split_seed: int | None
) -> ConfidenceConfig:
    _check_keys(sec, _CONFIDENCE_KEYS, where)
    _apply_calibration(sec, _CONFIDENCE_KEYS, where)
    kwargs = dict(
        params=params,
        alpha=_as_float(sec, "alpha", where),
        zeta=_as_float(sec, "zeta", where),
        C_star=_as_float(sec, "C_star", where),
        slack_C=_as_float(sec, "slack_C", where, default=0.0),
        C1=_as_float(sec, "C1", where, default=1.0),
        C2=_as_float(sec, "C2", where, default=1.0),
        M_star=_as_float(sec, "M_star", where, default=1.0),
        z_alpha=_as_float(sec, "z_alpha", where, default=None),
        density_threshold=_as_float(
            sec, "density_threshold", where, default=DEFAULT_DENSITY_THRESHOLD
        ),
        regression_threshold=_as_float(
            sec, "regression_threshold", where, default=DEFAULT_REGRESSION_THRESHOLD
        ),
        floor_ustat=_as_bool(sec, "floor_ustat", where, default=False),
        split_seed=split_seed,
    )
    try:
        return ConfidenceConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# data resolution: a dataset CSV or a model to sample from


@dataclass
class _RunData:
    basis: WaveletBasis
    model: ModelSpec | None
    dataset: Dataset | None
    n: int | None

    def realize(self, seed: int) -> Dataset:
        if self.dataset is not None:
            return self.dataset
        return sample_dataset(self.model, self.n, seed)


def _prep_data(cfg: dict, where: str, min_n: int) -> _RunData:
    has_ds = "dataset" in cfg
    has_model = "model" in cfg
    if has_ds and has_model:
        raise ConfigError(f"{where}: give either dataset or model, not both")
    if has_ds:
        if "n" in cfg:
            raise ConfigError(f"{where}.n conflicts with {where}.dataset")
        path = _as_str(cfg, "dataset", where)
        try:
            ds = Dataset.from_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where}.dataset: {exc}") from None
        if ds.n < min_n:
            raise ConfigError(f"{where}.dataset: need at least {min_n} observations")
        basis = _parse_basis(cfg, where, ds.d)
        return _RunData(basis, None, ds, None)
    if not has_model:
        raise ConfigError(f"{where}: needs a dataset path or a model object")
    sec = _section(cfg, "model", where)
    n = _as_int(cfg, "n", where, lo=min_n)
    basis = _parse_basis(cfg, where, _peek_dimension(sec, f"{where}.model"))
    model = _parse_model(sec, f"{where}.model", basis)
    return _RunData(basis, model, None, n)


def _prep_model(cfg: dict, where: str) -> tuple[WaveletBasis, ModelSpec]:
    sec = _section(cfg, "model", where)
    basis = _parse_basis(cfg, where, _peek_dimension(sec, f"{where}.model"))
    model = _parse_model(sec, f"{where}.model", basis)
    if model.resolution != basis.table_res:
        raise ConfigError(
            f"{where}.model.resolution must equal the basis tabulation R={basis.table_res}"
        )
    return basis, model


# ---------------------------------------------------------------------------
# output writers; every file embeds the config hash and the seed


def _jsonable(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def _write_json(path, payload: dict, config_hash: str, seed: int) -> str:
    body = dict(payload)
    body["config_hash"] = config_hash
    body["seed"] = seed
    text = json.dumps(body, sort_keys=True, indent=2, default=_jsonable) + "\n"
    Path(path).write_text(text)
    return text


def _write_csv(path, columns, rows, config_hash: str, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


@dataclass
class _RunContext:
    outdir: Path
    seed: int
    threads: int
    config_hash: str

    def progress(self, msg: str) -> None:
        print(msg, file=sys.stderr, flush=True)

    def write_json(self, name: str, payload: dict) -> str:
        return _write_json(self.outdir / name, payload, self.config_hash, self.seed)

    def write_csv(self, name: str, columns, rows) -> None:
        _write_csv(self.outdir / name, columns, rows, self.config_hash, self.seed)


def _export_estimate(est, ctx: _RunContext, name: str = "estimate") -> None:
    path = ctx.outdir / f"{name}.csv"
    est.save(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text())
    meta["config_hash"] = ctx.config_hash
    meta["seed"] = ctx.seed
    side.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def _mse_against(estimate, truth) -> float:
    r = min(estimate.resolution, truth.resolution)
    a = estimate.to_resolution(r).values
    b = truth.to_resolution(r).values
    return float(((a - b) ** 2).mean())


def _report_payload(report) -> dict:
    return {
        "kind": report.kind,
        "experiment": report.config,
        "summary": report.summary,
    }


# ---------------------------------------------------------------------------
# command preparers: validate fully, return a runner closure


def _prep_estimate_density(cfg):
    _check_keys(cfg, ("dataset", "model", "n", "basis", "params", "threshold", "seed"), "config")
    data = _prep_data(cfg, "config", min_n=2)
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    thr = _as_float(cfg, "threshold", "config", default=DEFAULT_DENSITY_THRESHOLD, lo=0.0, lo_open=True)

    def run(ctx):
        ds = data.realize(ctx.seed)
        ctx.progress(f"estimate-density: n={ds.n}, d={ds.d}")
        est = estimate_density(ds, params, data.basis, C_star=thr)
        _export_estimate(est, ctx)
        payload = {
            "selected_level": int(est.selected_level),
            "candidate_levels": sorted(int(l) for l in est.candidates),
            "clamp_lower": est.clamp_lower,
            "clamp_upper": est.clamp_upper,
            "threshold_const": est.threshold_const,
            "l2_norm": float(est.estimate.l2_norm()),
            "integral": float(est.estimate.integral()),
            "estimate_file": "estimate.csv",
        }
        if data.model is not None:
            payload["mse_vs_truth"] = _mse_against(est.estimate, data.model.g)
        return payload

    return run


def _prep_estimate_regression(cfg):
    allowed = (
        "dataset", "model", "n", "basis", "params",
        "regression_threshold", "density_threshold", "seed",
    )
    _check_keys(cfg, allowed, "config")
    data = _prep_data(cfg, "config", min_n=4)
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    try:
        params.require_estimation()
    except ValueError as exc:
        raise ConfigError(f"config.params: {exc}") from None
    reg_thr = _as_float(
        cfg, "regression_threshold", "config",
        default=DEFAULT_REGRESSION_THRESHOLD, lo=0.0, lo_open=True,
    )
    den_thr = _as_float(
        cfg, "density_threshold", "config",
        default=DEFAULT_DENSITY_THRESHOLD, lo=0.0, lo_open=True,
    )

    def run(ctx):
        ds = data.realize(ctx.seed)
        ctx.progress(f"estimate-regression: n={ds.n}, d={ds.d}")
        est = estimate_regression(
            ds, params, data.basis,
            C_starstar=reg_thr, C_star=den_thr, split_seed=ctx.seed,
        )
        _export_estimate(est, ctx)
        payload = {
            "selected_level": int(est.selected_level),
            "density_level": int(est.density.selected_level),
            "candidate_levels": sorted(int(l) for l in est.candidates),
            "clamp_lower": est.clamp_lower,
            "clamp_upper": est.clamp_upper,
            "threshold_const": est.threshold_const,
            "split_seed": est.split_seed,
            "l2_norm": float(est.estimate.l2_norm()),
            "estimate_file": "estimate.csv",
        }
        if data.model is not None:
            payload["mse_vs_truth"] = _mse_against(est.estimate, data.model.f)
        return payload

    return run


def _prep_test_simple(cfg):
    _check_keys(cfg, ("dataset", "model", "n", "basis", "test", "seed"), "config")
    data = _prep_data(cfg, "config", min_n=2)
    tcfg = _parse_test(_section(cfg, "test", "config"), "config.test", None, ("simple",))

    def run(ctx):
        ds = data.realize(ctx.seed)
        ctx.progress(f"test-simple: n={ds.n}")
        outcome = simple_null_test(ds, tcfg, data.basis)
        return {"outcome": outcome.to_json_dict()}

    return run


def _prep_test_composite(cfg):
    _check_keys(cfg, ("dataset", "model", "n", "basis", "params", "test", "seed"), "config")
    data = _prep_data(cfg, "config", min_n=4)
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    tcfg = _parse_test(_section(cfg, "test", "config"), "config.test", params, ("composite",))

    def run(ctx):
        ds = data.realize(ctx.seed)
        ctx.progress(f"test-composite: n={ds.n}")
        outcome = composite_test(ds, tcfg, data.basis, split_seed=ctx.seed)
        return {"outcome": outcome.to_json_dict()}

    return run


def _prep_confset(cfg):
    allowed = ("dataset", "model", "n", "basis", "params", "confidence", "save_center", "seed")
    _check_keys(cfg, allowed, "config")
    data = _prep_data(cfg, "config", min_n=6)
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    ccfg = _parse_confidence(
        _section(cfg, "confidence", "config"), "config.confidence", params, cfg["seed"]
    )
    save_center = _as_bool(cfg, "save_center", "config", default=False)

    def run(ctx):
        ds = data.realize(ctx.seed)
        ctx.progress(f"confset: n={ds.n}")
        ball = build_confidence_ball(ds, ccfg, data.basis)
        payload = {"ball": ball.to_json_dict()}
        if save_center:
            path = ctx.outdir / "center.csv"
            ball.center.save(path)
            ctx.write_json(
                "center.json",
                {"kind": "center", "resolution": ball.center.resolution, "d": ball.center.d},
            )
            payload["center_file"] = "center.csv"
        return payload

    return run


def _prep_calibrate(cfg):
    allowed = (
        "kind", "panel", "basis", "alpha", "reps", "n", "seed", "params", "test",
        "confidence", "estimator", "density_threshold", "threshold_grid",
        "target_power", "bump_cells", "shell_level", "floor",
    )
    _check_keys(cfg, allowed, "config")
    kind = _as_str(cfg, "kind", "config", choices=CALIBRATION_KINDS)
    panel_spec = cfg.setdefault("panel", [])
    if not isinstance(panel_spec, list) or not all(isinstance(m, dict) for m in panel_spec):
        raise ConfigError("config.panel must be a list of model objects")
    if kind != "power-D" and not panel_spec:
        raise ConfigError(f"config.panel must be nonempty for kind {kind!r}")
    d = _peek_dimension(panel_spec[0], "config.panel[0]") if panel_spec else 1
    basis = _parse_basis(cfg, "config", d)
    models = [
        _parse_model(sec, f"config.panel[{i}]", basis) for i, sec in enumerate(panel_spec)
    ]
    alpha = _as_float(cfg, "alpha", "config", lo=0.0, hi=1.0, lo_open=True)
    reps = _as_int(cfg, "reps", "config", lo=2)
    n = _as_int(cfg, "n", "config", lo=2)

    params = None
    if "params" in cfg:
        params = _parse_params(_section(cfg, "params", "config"), "config.params")
    tcfg = None
    if "test" in cfg:
        tcfg = _parse_test(
            _section(cfg, "test", "config"), "config.test", params, ("simple", "composite")
        )
    ccfg = None
    if "confidence" in cfg:
        if params is None:
            raise ConfigError("config.confidence needs config.params")
        ccfg = _parse_confidence(_section(cfg, "confidence", "config"), "config.confidence", params, None)

    needs = {
        "composite-zeta": tcfg is not None and isinstance(tcfg, CompositeTestConfig),
        "density-error": params is not None,
        "lepski": params is not None,
        "slack": ccfg is not None,
        "power-D": tcfg is not None,
    }
    if not needs.get(kind, True):
        wants = {
            "composite-zeta": "a composite config.test",
            "density-error": "config.params",
            "lepski": "config.params",
            "slack": "config.confidence",
            "power-D": "config.test",
        }[kind]
        raise ConfigError(f"config: calibration kind {kind!r} needs {wants}")

    est_kind = _as_str(cfg, "estimator", "config", default="density", choices=("density", "regression"))
    den_thr = _as_float(
        cfg, "density_threshold", "config", default=DEFAULT_DENSITY_THRESHOLD, lo=0.0, lo_open=True
    )
    grid = cfg.get("threshold_grid")
    if grid is not None:
        if (
            not isinstance(grid, list)
            or not grid
            or any(isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 for t in grid)
        ):
            raise ConfigError("config.threshold_grid must be a list of positive numbers")
        grid = [float(t) for t in grid]
        cfg["threshold_grid"] = grid
    target_power = _as_float(cfg, "target_power", "config", default=0.92, lo=0.0, lo_open=True)
    bump_cells = _as_int(cfg, "bump_cells", "config", default=2, lo=1)
    shell_level = _as_int(cfg, "shell_level", "config", default=2, lo=0)
    floor = _as_float(cfg, "floor", "config", default=None, lo=0.0)

    def run(ctx):
        ctx.progress(f"calibrate {kind}: reps={reps}, n={n}")
        payload = calibrate(
            kind, models, basis, alpha=alpha, reps=reps, n=n, seed=ctx.seed,
            params=params, test_cfg=tcfg, confidence_cfg=ccfg,
            estimator_kind=est_kind, density_threshold=den_thr,
            threshold_grid=grid, target_power=target_power,
            bump_cells=bump_cells, shell_level=shell_level, floor=floor,
            threads=ctx.threads,
        )
        ctx.write_json("calibration.json", dict(payload))
        return {"calibration": payload, "calibration_file": "calibration.json"}

    return run


def _prep_mc_coverage(cfg):
    _check_keys(cfg, ("model", "n", "reps", "basis", "params", "confidence", "seed"), "config")
    basis, model = _prep_model(cfg, "config")
    n = _as_int(cfg, "n", "config", lo=6)
    reps = _as_int(cfg, "reps", "config", lo=2)
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    ccfg = _parse_confidence(_section(cfg, "confidence", "config"), "config.confidence", params, None)

    def run(ctx):
        ctx.progress(f"mc-coverage: {reps} replicates at n={n}")
        report = mc_coverage(model, n, reps, ccfg, basis, seed=ctx.seed, threads=ctx.threads)
        ctx.write_csv("replicates.csv", *report.replicate_table())
        return _report_payload(report)

    return run


def _prep_mc_rate(cfg):
    allowed = (
        "model", "ns", "reps", "estimator", "basis", "params",
        "density_threshold", "regression_threshold", "seed",
    )
    _check_keys(cfg, allowed, "config")
    basis, model = _prep_model(cfg, "config")
    ns = cfg.get("ns")
    if (
        not isinstance(ns, list)
        or any(isinstance(v, bool) or not isinstance(v, int) or v < 2 for v in ns)
        or len(set(ns)) < 3
    ):
        raise ConfigError("config.ns must be a list of at least three distinct integers >= 2")
    reps = _as_int(cfg, "reps", "config", lo=2)
    est_kind = _as_str(cfg, "estimator", "config", choices=("density", "regression"))
    params = _parse_params(_section(cfg, "params", "config"), "config.params")
    if est_kind == "regression":
        try:
            params.require_estimation()
        except ValueError as exc:
            raise ConfigError(f"config.params: {exc}") from None
    den_thr = _as_float(
        cfg, "density_threshold", "config", default=DEFAULT_DENSITY_THRESHOLD, lo=0.0, lo_open=True
    )
    reg_thr = _as_float(
        cfg, "regression_threshold", "config", default=DEFAULT_REGRESSION_THRESHOLD, lo=0.0, lo_open=True
    )

    def run(ctx):
        ctx.progress(f"mc-rate ({est_kind}): ns={ns}, {reps} replicates each")
        report = mc_rate(
            model, ns, reps, est_kind, params, basis, seed=ctx.seed,
            threads=ctx.threads, density_threshold=den_thr, regression_threshold=reg_thr,
        )
        ctx.write_csv("replicates.csv", *report.replicate_table())
        return _report_payload(report)

    return run


def _prep_mc_power(cfg):
    _check_keys(cfg, ("model", "n", "reps", "basis", "params", "test", "seed"), "config")
    basis, model = _prep_model(cfg, "config")
    n = _as_int(cfg, "n", "config", lo=4)
    reps = _as_int(cfg, "reps", "config", lo=100)
    params = None
    if "params" in cfg:
        params = _parse_params(_section(cfg, "params", "config"), "config.params")
    tcfg = _parse_test(
        _section(cfg, "test", "config"), "config.test", params, ("simple", "composite")
    )
    test_kind = "simple" if isinstance(tcfg, SimpleTestConfig) else "composite"

    def run(ctx):
        ctx.progress(f"mc-power ({test_kind}): {reps} replicates at n={n}")
        report = mc_rejection_rate(
            test_kind, model, n, reps, tcfg, basis, seed=ctx.seed, threads=ctx.threads
        )
        ctx.write_csv("replicates.csv", *report.replicate_table())
        return _report_payload(report)

    return run


_PREPARERS = {
    "estimate-density": _prep_estimate_density,
    "estimate-regression": _prep_estimate_regression,
    "test-simple": _prep_test_simple,
    "test-composite": _prep_test_composite,
    "confset": _prep_confset,
    "calibrate": _prep_calibrate,
    "mc-coverage": _prep_mc_coverage,
    "mc-rate": _prep_mc_rate,
    "mc-power": _prep_mc_power,
}

_HELP = {
    "estimate-density": "adaptive design-density estimate from a dataset or a sampled model",
    "estimate-regression": "adaptive regression estimate with the plug-in density",
    "test-simple": "U-statistic test of the flat null f = 1/2",
    "test-composite": "multi-level test of a Besov smoothness ball",
    "confset": "adaptive L2 confidence ball for the regression function",
    "calibrate": "empirical calibration of one pipeline constant over a null panel",
    "mc-coverage": "Monte Carlo coverage of the confidence ball",
    "mc-rate": "Monte Carlo estimation-error curve over a sample-size grid",
    "mc-power": "Monte Carlo rejection rate of a test on one model",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract reserves 2 for
    # runtime failures, so usage problems are rethrown as config errors
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="binwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name in _PREPARERS:
        cmd = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=".", help="output directory (default: current)")
        cmd.add_argument(
            "--threads", type=int, default=None,
            help="cap on replicate parallelism (default: available cores)",
        )
    return parser


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    return obj


def _fail(code: int, exc: BaseException) -> int:
    msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    print(f"error: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(1, exc)

    try:
        cfg = copy.deepcopy(_load_config(args.config))
        if args.seed is not None:
            cfg["seed"] = args.seed
        seed = _as_int(cfg, "seed", "config", default=0, lo=0, hi=_MAX_SEED)
        runner = _PREPARERS[args.command](cfg)
        canonical = json.dumps(
            {"command": args.command, "config": cfg}, sort_keys=True, separators=(",", ":")
        )
        config_hash = hashlib.sha256(canonical.encode()).hexdigest()
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        if threads < 1:
            raise ConfigError("--threads must be a positive integer")
    except ConfigError as exc:
        return _fail(1, exc)
    except Exception as exc:  # noqa: BLE001 - malformed configs fail however they fail
        return _fail(1, exc)

    try:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        ctx = _RunContext(outdir, seed, threads, config_hash)
        ctx.write_json("resolved_config.json", {"command": args.command, "config": cfg})
        payload = runner(ctx)
        text = ctx.write_json("summary.json", {"command": args.command, **payload})
        sys.stdout.write(text)
    except Exception as exc:  # noqa: BLE001
        return _fail(2, exc)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
