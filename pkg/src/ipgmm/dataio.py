"""Reading datasets and scatter files, writing models and plot data.

JSON output carries ``"schema": 1`` and prints every float with 17
significant digits so that a saved model reloads to the same bits.
Non-finite floats are written as the strings ``"inf"``, ``"-inf"`` and
``"nan"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from .covclass import CovClassModel
from .errors import InputError
from .mixture import MixtureModel
from .spectral import FamilyKind, IntermediateFamily

SCHEMA = 1
BUILTIN = {"iris": "species", "crabs": "group"}


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray | None
    columns: list
    label_column: str | None = None


def _parse_csv(text: str, source: str, label: str | None) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise InputError(f"{source}: line 1: missing header row")
    header = [h.strip() for h in rows[0]]
    if label is not None and label not in header:
        raise InputError(f"{source}: line 1: no column named {label!r}")
    li = header.index(label) if label is not None else None
    values, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{source}: line {lineno}: expected {len(header)} fields, found {len(row)}")
        out = []
        for j, cell in enumerate(row):
            if j == li:
                labels.append(cell.strip())
                continue
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{source}: line {lineno}: column {header[j]!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{source}: line {lineno}: column {header[j]!r}: non-finite value")
            out.append(v)
        values.append(out)
    if not values:
        raise InputError(f"{source}: no data rows")
    columns = [h for j, h in enumerate(header) if j != li]
    return Dataset(np.array(values), np.array(labels) if li is not None else None, columns, label)


def load_dataset(source, label: str | None = None) -> Dataset:
    """Load a packaged dataset (``"iris"``, ``"crabs"``) or a CSV file.

    The packaged datasets use their group column as the default label.

    Raises
    ------
    InputError
        On a malformed file; the message carries the line number.
    """
    name = str(source)
    if name.lower() in BUILTIN:
        text = (resources.files("ipgmm") / "data" / f"{name.lower()}.csv").read_text(encoding="utf-8")
        return _parse_csv(text, name, label or BUILTIN[name.lower()])
    path = Path(name)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{name}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise InputError(f"{name}: not UTF-8 text") from None
    return _parse_csv(text, name, label)


def load_scatters(path):
    """Read a JSON array of ``{"n": number, "S": d x d array}`` records."""
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(records, list) or not records:
        raise InputError(f"{path}: expected a non-empty JSON array")
    scatters, sizes = [], []
    for i, rec in enumerate(records):
        try:
            s = np.asarray(rec["S"], dtype=float)
            n = float(rec["n"])
        except (KeyError, TypeError, ValueError):
            raise InputError(f"{path}: record {i}: needs numeric 'n' and a matrix 'S'") from None
        if s.ndim != 2 or s.shape[0] != s.shape[1] or (scatters and s.shape != scatters[0].shape):
            raise InputError(f"{path}: record {i}: 'S' must be square and of a common size")
        if not n > 0:
            raise InputError(f"{path}: record {i}: 'n' must be positive")
        scatters.append(s)
        sizes.append(n)
    return np.array(scatters), np.array(sizes)


def group_scatters(X, labels):
    """Group sizes and (1/n)-normalized scatters; groups in sorted label order."""
    classes = np.unique(labels)
    sizes, scatters = [], []
    for c in classes:
        Y = X[labels == c]
        dev = Y - Y.mean(axis=0)
        sizes.append(len(Y))
        scatters.append(dev.T @ dev / len(Y))
    return np.array(scatters), np.array(sizes, dtype=float), classes


# --- JSON -----------------------------------------------------------------------------


def _encode(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return format(x, ".17g")
        return json.dumps("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(payload: dict) -> str:
    """Serialize with a schema tag and 17-significant-digit floats."""
    return _encode({"schema": SCHEMA, **payload}) + "\n"


def to_float(x) -> float:
    if isinstance(x, str):
        return float(x)  # "inf", "-inf", "nan"
    return float(x)


def cov_to_dict(cov: CovClassModel) -> dict:
    return {
        "family": cov.family.kind.value,
        "G": cov.family.G,
        "partition": cov.partition,
        "gammas": cov.gammas,
        "shapes": cov.shapes,
        "orientations": cov.orientations,
        "objective": cov.objective,
        "c_sh": cov.c_sh,
        "c_vol": cov.c_vol,
        "n_iter": cov.n_iter,
        "converged": cov.converged,
    }


def cov_from_dict(d: dict) -> CovClassModel:
    return CovClassModel(
        IntermediateFamily(FamilyKind(d["family"]), int(d["G"])),
        np.asarray(d["partition"], dtype=int),
        np.asarray(d["gammas"], dtype=float),
        np.asarray(d["shapes"], dtype=float),
        np.asarray(d["orientations"], dtype=float),
        objective=to_float(d.get("objective", "nan")),
        c_sh=to_float(d.get("c_sh", "inf")),
        c_vol=to_float(d.get("c_vol", "inf")),
        n_iter=int(d.get("n_iter", 0)),
        converged=bool(d.get("converged", False)),
    )


def mixture_to_dict(model: MixtureModel, classes=None) -> dict:
    out = {"weights": model.weights, "means": model.means, "cov": cov_to_dict(model.cov)}
    if classes is not None:
        out["classes"] = [str(c) for c in classes]
    return out


def mixture_from_dict(d: dict) -> MixtureModel:
    return MixtureModel(
        np.asarray(d["weights"], dtype=float), np.asarray(d["means"], dtype=float), cov_from_dict(d["cov"])
    )


def save_model(path, model: MixtureModel, classes=None) -> None:
    Path(path).write_text(dumps({"model": mixture_to_dict(model, classes)}), encoding="utf-8")


def load_model(path):
    """Returns ``(MixtureModel, classes or None)``."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        d = payload["model"]
        classes = np.array(d["classes"]) if "classes" in d else None
        return mixture_from_dict(d), classes
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a model file ({exc})") from None


# --- plot data ------------------------------------------------------------------------


def ellipse_points(mean, cov, level: float = 0.975, points: int = 64) -> np.ndarray:
    """Points on the ``level`` probability contour of a bivariate Gaussian."""
    radius = math.sqrt(chi2.ppf(level, df=2))
    t = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
    circle = np.column_stack([np.cos(t), np.sin(t)])
    return np.asarray(mean) + radius * circle @ np.linalg.cholesky(cov).T


def ellipses_csv(model: MixtureModel, pair, columns=None, level: float = 0.975, points: int = 64) -> str:
    """CSV of contour points per component for the variable pair ``(a, b)``."""
    a, b = pair
    covs = model.covariances()
    names = columns or [f"x{j}" for j in range(model.d)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "point", names[a], names[b]])
    for i in range(model.k):
        sub = covs[i][np.ix_([a, b], [a, b])]
        for j, (x, y) in enumerate(ellipse_points(model.means[i, [a, b]], sub, level, points)):
            w.writerow([i, j, format(x, ".17g"), format(y, ".17g")])
    return buf.getvalue()
