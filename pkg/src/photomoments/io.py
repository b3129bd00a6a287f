"""JSON and CSV formats for moments, models, datasets and simulation scenarios."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .detection import TmdConfig, TwinBeamConfig
from .displaced import DisplacedStateModel
from .fock import PhotonStatistics, SourceSpec
from .moments import NormalizedMoments

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Input document does not match its schema."""


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def moments_to_dict(g: NormalizedMoments) -> dict:
    out = {
        "mean": g.mean,
        "g": g.g.tolist(),
        "errors": None if g.errors is None else g.errors.tolist(),
    }
    if g.mean_error is not None:
        out["mean_error"] = g.mean_error
    return out


def moments_from_dict(data: dict) -> NormalizedMoments:
    try:
        return NormalizedMoments(
            data["g"], data["mean"], data.get("errors"), data.get("mean_error")
        )
    except KeyError as exc:
        raise SchemaError(f"moments document lacks field {exc.args[0]!r}") from None


def source_from_dict(data: dict) -> PhotonStatistics:
    """Source given either as a :class:`SourceSpec` object or inline ``{"probs": [...]}``."""
    if "probs" in data:
        return PhotonStatistics(data["probs"])
    return SourceSpec.from_dict(data).build()


def model_to_dict(model: DisplacedStateModel, source: SourceSpec | None = None) -> dict:
    src = source.to_dict() if source is not None else {"probs": model.source.probs.tolist()}
    return {"source": src, "overlap": model.overlap, "disp_sq": model.disp_sq}


def model_from_dict(data: dict) -> DisplacedStateModel:
    try:
        return DisplacedStateModel(source_from_dict(data["source"]), data["overlap"], data.get("disp_sq", 0.0))
    except KeyError as exc:
        raise SchemaError(f"model document lacks field {exc.args[0]!r}") from None


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, non-finite floats as null)."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(float(obj))
    return obj


@dataclass
class Dataset:
    means: np.ndarray
    g: np.ndarray
    errors: np.ndarray

    def points(self):
        return [(m, gv, ev) for m, gv, ev in zip(self.means, self.g, self.errors)]


def read_dataset_csv(text: str) -> Dataset:
    """Parse ``mean, g2..gK, err2..errK`` rows.

    Missing error columns default to unit weights.  Errors name the offending
    line.
    """
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    if "mean" not in fields:
        raise SchemaError("line 1: dataset header must contain a 'mean' column")
    orders = sorted(int(f[1:]) for f in fields if f.startswith("g") and f[1:].isdigit())
    if not orders or orders != list(range(2, orders[-1] + 1)):
        raise SchemaError("line 1: need contiguous columns g2, g3, ...")
    means, gs, errs = [], [], []
    for row in reader:
        line = reader.line_num
        try:
            means.append(float(row["mean"]))
            gs.append([float(row[f"g{m}"]) for m in orders])
            errs.append([float(row[f"err{m}"]) if row.get(f"err{m}") not in (None, "") else 1.0
                         for m in orders])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"line {line}: {exc}") from None
        if not all(math.isfinite(v) for v in [means[-1], *gs[-1], *errs[-1]]):
            raise SchemaError(f"line {line}: non-finite value")
    if not means:
        raise SchemaError("dataset has no rows")
    return Dataset(np.array(means), np.array(gs), np.array(errs))


def write_dataset_csv(means, g, errors) -> str:
    g = np.atleast_2d(g)
    k = g.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mean"] + [f"g{m}" for m in range(2, k + 2)] + [f"err{m}" for m in range(2, k + 2)])
    for mean, gv, ev in zip(means, g, np.atleast_2d(errors)):
        writer.writerow([repr(float(mean))] + [repr(float(v)) for v in gv] + [repr(float(v)) for v in ev])
    return buf.getvalue()


_NUM01 = {"type": "number", "minimum": 0, "maximum": 1}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "source", "overlap", "grid", "detector", "trials", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "source": {
            "type": "object",
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["fock", "coherent", "heralded_pdc"]},
                "n": {"type": "integer", "minimum": 0},
                "mean": {"type": "number", "minimum": 0},
                "squeeze": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "g2": {"type": "number", "exclusiveMinimum": 0},
                "herald_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "prep_efficiency": _NUM01,
                "n_max": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "overlap": _NUM01,
        "grid": {
            "type": "object",
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "mean": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "disp_sq": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
            },
            "additionalProperties": False,
        },
        "detector": {
            "type": "object",
            "properties": {
                "bins": {"type": "integer", "minimum": 1, "maximum": 16},
                "eta": _NUM01,
                "bin_probs": {"type": "array", "items": _NUM01},
                "dark_count": _NUM01,
            },
            "additionalProperties": False,
        },
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "analysis": {
            "type": "object",
            "properties": {"m_max": {"type": "integer", "minimum": 2, "maximum": 16}},
            "additionalProperties": False,
        },
        "twin_beam": {
            "type": "object",
            "required": ["squeeze", "eta_signal", "eta_herald", "trials"],
            "properties": {
                "squeeze": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eta_signal": _NUM01,
                "eta_herald": _NUM01,
                "trials": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
}


@dataclass
class Scenario:
    source_spec: SourceSpec | None
    source: PhotonStatistics
    overlap: float
    disp_sq: list[float]
    detector: TmdConfig
    trials: int
    seed: int
    m_max: int
    twin_beam: TwinBeamConfig | None


def validate_scenario(data) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"scenario field {path}: {err.message}")


def scenario_from_dict(data: dict) -> Scenario:
    validate_scenario(data)
    try:
        spec = SourceSpec.from_dict(data["source"])
        source = spec.build()
        detector = TmdConfig.from_dict(data["detector"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"scenario field source/detector: {exc}") from None
    grid = data["grid"]
    if "mean" in grid:
        if min(grid["mean"]) < source.mean - 1e-9:
            raise SchemaError(f"scenario field grid/mean: values below source mean {source.mean:.6g}")
        disp_sq = [max(0.0, m - source.mean) for m in grid["mean"]]
    else:
        disp_sq = list(grid["disp_sq"])
    m_max = data.get("analysis", {}).get("m_max", 4)
    if m_max > detector.bins:
        raise SchemaError(f"scenario field analysis/m_max: {m_max} exceeds {detector.bins} bins")
    twin = None
    if "twin_beam" in data:
        tb = dict(data["twin_beam"])
        tb.setdefault("seed", data["seed"])
        twin = TwinBeamConfig(**tb)
    return Scenario(spec, source, float(data["overlap"]), disp_sq, detector,
                    int(data["trials"]), int(data["seed"]), int(m_max), twin)


def load_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from None
