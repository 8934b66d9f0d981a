"""CSV readers and writers, landmark and price ingestion.

Every file written here starts with a versioned comment line::

    # manifold-regress v1 [key=value ...]

Readers skip any ``#`` line, so the metadata is optional on input.
"""

from __future__ import annotations

import csv
import io as _io
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .errors import DataError, InvalidPoint
from .manifolds import Grassmann, Manifold, PlanarShape, manifold_from_dict, manifold_to_dict, shape_from_landmarks
from .regression import Dataset

FORMAT_TAG = "# manifold-regress v1"
PathLike = Union[str, Path]


def fmt(value) -> str:
    """Shortest string that parses back to the same float."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _open_text(src) -> tuple[TextIO, Optional[str], bool]:
    if isinstance(src, (str, Path)):
        return open(src, newline="", encoding="utf-8"), str(src), True
    return src, getattr(src, "name", None), False


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        tag = FORMAT_TAG
        if meta:
            tag += " " + " ".join(f"{k}={v}" for k, v in meta.items())
        f.write(tag + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


@dataclass
class CsvTable:
    meta: dict
    header: list
    rows: list  # (line_number, fields)

    def column(self, name, cast=float):
        j = self.header.index(name)
        return [cast(fields[j]) for _, fields in self.rows]


def read_csv(src) -> CsvTable:
    """Read a CSV written by ``write_csv`` (or any CSV with optional ``#`` lines)."""
    f, name, close = _open_text(src)
    try:
        meta, header, rows = {}, None, []
        for lineno, line in enumerate(f, 1):
            if line.startswith("#"):
                if line.startswith(FORMAT_TAG):
                    for tok in line[len(FORMAT_TAG):].split():
                        if "=" in tok:
                            k, v = tok.split("=", 1)
                            meta[k] = v
                continue
            if not line.strip():
                continue
            fields = next(csv.reader([line]))
            if header is None:
                header = [h.strip() for h in fields]
            else:
                rows.append((lineno, fields))
        if header is None:
            raise DataError("file has no header row", path=name)
        return CsvTable(meta, header, rows)
    finally:
        if close:
            f.close()


def _parse_float(text: str, what: str, path, line) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} in column {what}", path=path, line=line) from None
    if not np.isfinite(v):
        raise DataError(f"non-finite value in column {what}", path=path, line=line)
    return v


# --------------------------------------------------------------------------
# generic manifold datasets
# --------------------------------------------------------------------------


def write_dataset(data: Dataset, path: PathLike, extras: Optional[dict] = None):
    """Write covariates ``x1..xm``, responses ``y1..yL`` and optional extra row-encoded columns.

    Responses use the manifold's row encoding (coordinates on the sphere,
    interleaved preshape for shapes, flattened frame for Stiefel, flattened
    projection matrix for Grassmann). ``extras`` maps a column prefix to an
    (n, L') array, e.g. ``{"mu": means}``.
    """
    extras = extras or {}
    mf = data.manifold
    header = [f"x{j + 1}" for j in range(data.m)] + [f"y{j + 1}" for j in range(mf.row_width)]
    blocks = []
    for prefix, arr in extras.items():
        arr = np.asarray(arr, dtype=float).reshape(data.n, -1)
        header += [f"{prefix}{j + 1}" for j in range(arr.shape[1])]
        blocks.append(arr)
    if data.ids is not None:
        header = ["id"] + header
    rows = []
    for i in range(data.n):
        row = list(data.covariates[i]) + list(mf.to_row(data.responses[i]))
        for arr in blocks:
            row += list(arr[i])
        rows.append(([data.ids[i]] if data.ids is not None else []) + row)
    write_csv(path, header, rows, {k: v for k, v in manifold_to_dict(mf).items()})


_COL = re.compile(r"^([A-Za-z_]+?)(\d+)$")


def read_dataset(src) -> tuple[Dataset, dict]:
    """Inverse of ``write_dataset``; returns ``(dataset, extras)``."""
    table = read_csv(src)
    name = src if isinstance(src, (str, Path)) else None
    if "kind" not in table.meta:
        raise DataError("missing manifold metadata (kind=...) in header comment", path=name, line=1)
    mf = manifold_from_dict(table.meta)
    groups: dict = {}
    ids = None
    for j, col in enumerate(table.header):
        if col == "id":
            ids = j
            continue
        mt = _COL.match(col)
        if not mt:
            raise DataError(f"unrecognized column {col!r}", path=name)
        groups.setdefault(mt.group(1), []).append(j)
    if "x" not in groups or "y" not in groups:
        raise DataError("dataset needs x and y columns", path=name)
    cov, resp, extra_rows, id_vals = [], [], {k: [] for k in groups if k not in ("x", "y")}, []
    for lineno, fields in table.rows:
        if len(fields) != len(table.header):
            raise DataError(f"expected {len(table.header)} fields, got {len(fields)}", path=name, line=lineno)
        vals = {k: [_parse_float(fields[j], table.header[j], name, lineno) for j in cols] for k, cols in groups.items()}
        cov.append(vals["x"])
        try:
            resp.append(mf.from_row(vals["y"]))
        except (InvalidPoint, ArithmeticError, ValueError) as exc:
            raise DataError(f"invalid response: {exc}", path=name, line=lineno) from None
        for k in extra_rows:
            extra_rows[k].append(vals[k])
        if ids is not None:
            id_vals.append(fields[ids])
    data = Dataset(np.array(cov), tuple(resp), mf, tuple(id_vals) if ids is not None else None)
    return data, {k: np.array(v) for k, v in extra_rows.items()}


# --------------------------------------------------------------------------
# landmarks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LandmarkRecord:
    id: str
    diag: int
    age: float
    landmarks: np.ndarray  # (k, 2)

    @property
    def k(self) -> int:
        return self.landmarks.shape[0]


@dataclass
class LandmarkIngest:
    records: list
    errors: list = field(default_factory=list)  # DataError per rejected row
    dataset: Optional[Dataset] = None

    @property
    def ok(self) -> bool:
        return not self.errors


def landmark_header(k: int) -> list:
    return ["id", "diag", "age"] + [c for j in range(1, k + 1) for c in (f"x{j}", f"y{j}")]


def read_landmarks(src) -> LandmarkIngest:
    """Parse a landmark CSV (``id,diag,age,x1,y1,...,xk,yk``).

    Rows that fail (wrong field count, non-numeric values, diagnosis not 0/1,
    degenerate landmarks) are collected as line-numbered DataErrors and the
    remaining rows are kept. A bad header, or a file with no usable rows,
    raises.
    """
    table = read_csv(src)
    name = src if isinstance(src, (str, Path)) else getattr(src, "name", None)
    hdr = table.header
    k = (len(hdr) - 3) // 2
    if k < 3 or hdr != landmark_header(k):
        raise DataError("header must be id,diag,age,x1,y1,...,xk,yk with k >= 3", path=name, line=None)
    records, errors = [], []
    for lineno, fields in table.rows:
        try:
            if len(fields) != len(hdr):
                raise DataError(f"expected {len(hdr)} fields (k={k}), got {len(fields)}", path=name, line=lineno)
            diag = _parse_float(fields[1], "diag", name, lineno)
            if diag not in (0.0, 1.0):
                raise DataError(f"diag must be 0 or 1, got {fields[1]!r}", path=name, line=lineno)
            age = _parse_float(fields[2], "age", name, lineno)
            coords = np.array([_parse_float(v, hdr[3 + j], name, lineno) for j, v in enumerate(fields[3:])])
            lm = coords.reshape(k, 2)
            try:
                shape_from_landmarks(lm)
            except InvalidPoint as exc:
                raise DataError(f"degenerate landmark row: {exc}", path=name, line=lineno) from None
            records.append(LandmarkRecord(fields[0], int(diag), age, lm))
        except DataError as exc:
            errors.append(exc)
    if not records:
        raise DataError("no valid landmark rows", path=name)
    return LandmarkIngest(records, errors)


def write_landmarks(records: Sequence[LandmarkRecord], path: PathLike, meta: Optional[dict] = None):
    k = records[0].k
    rows = [[r.id, r.diag, r.age] + list(np.asarray(r.landmarks, dtype=float).ravel()) for r in records]
    write_csv(path, landmark_header(k), rows, meta)


def landmarks_to_dataset(records: Sequence[LandmarkRecord]) -> Dataset:
    return Dataset(
        np.array([(float(r.diag), r.age) for r in records]),
        tuple(shape_from_landmarks(r.landmarks) for r in records),
        PlanarShape(records[0].k),
        tuple(r.id for r in records),
    )


def ingest_landmarks(src) -> LandmarkIngest:
    out = read_landmarks(src)
    out.dataset = landmarks_to_dataset(out.records)
    return out


# --------------------------------------------------------------------------
# prices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PriceTable:
    dates: tuple
    assets: tuple
    values: np.ndarray  # (days, assets)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.dates), len(self.assets)):
            raise DataError(f"values shape {v.shape} does not match {len(self.dates)} dates x {len(self.assets)} assets")
        if len(self.assets) < 2:
            raise DataError("need at least 2 assets")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        object.__setattr__(self, "values", v)


def read_prices(src) -> PriceTable:
    table = read_csv(src)
    name = src if isinstance(src, (str, Path)) else getattr(src, "name", None)
    hdr = table.header
    if len(hdr) < 3 or hdr[0] != "date":
        raise DataError("header must be date,asset1,...,assetN with N >= 2", path=name, line=None)
    dates, rows = [], []
    for lineno, fields in table.rows:
        if len(fields) != len(hdr):
            raise DataError(f"expected {len(hdr)} fields, got {len(fields)}", path=name, line=lineno)
        try:
            d = date.fromisoformat(fields[0].strip())
        except ValueError:
            raise DataError(f"bad ISO-8601 date {fields[0]!r}", path=name, line=lineno) from None
        if dates and d <= dates[-1]:
            raise DataError(f"date {d} is not after {dates[-1]}; rows must be sorted ascending", path=name, line=lineno)
        dates.append(d)
        rows.append([_parse_float(v, hdr[j + 1], name, lineno) for j, v in enumerate(fields[1:])])
    if not rows:
        raise DataError("no price rows", path=name)
    return PriceTable(tuple(dates), tuple(hdr[1:]), np.array(rows))


def write_prices(table: PriceTable, path: PathLike):
    rows = [[d.isoformat()] + list(v) for d, v in zip(table.dates, table.values)]
    write_csv(path, ["date"] + list(table.assets), rows)


@dataclass
class WeeklyBases:
    data: Dataset
    weeks: list  # ISO (year, week) of each retained week
    dropped: list  # ISO (year, week) of weeks without enough trading days


def _monday(d: date) -> date:
    return date.fromordinal(d.toordinal() - d.weekday())


def prices_to_weekly_eigenbases(
    table: PriceTable, eig_threshold: float = 1e-10, full_week_days: Optional[int] = 5
) -> WeeklyBases:
    """Per-week covariance eigenbases as mixed-dimension Grassmann responses.

    Days are grouped by calendar week (Monday start). Weeks with fewer than
    ``full_week_days`` trading days are dropped (``None`` keeps every week).
    Each kept week's unbiased sample covariance across assets is
    eigendecomposed and eigenvectors with eigenvalue above ``eig_threshold``
    form the basis. The covariate is the number of weeks since the first
    week in the table, so gaps left by dropped weeks are preserved.
    """
    if not eig_threshold > 0:
        raise ValueError("eig_threshold must be positive")
    groups: dict = {}
    for i, d in enumerate(table.dates):
        groups.setdefault(_monday(d), []).append(i)
    first = min(groups)
    cov_idx, bases, weeks, dropped = [], [], [], []
    for monday, idx in sorted(groups.items()):
        label = tuple(monday.isocalendar()[:2])
        if full_week_days is not None and len(idx) < full_week_days:
            dropped.append(label)
            continue
        if len(idx) < 2:
            raise DataError(f"week {label[0]}-W{label[1]:02d} has fewer than 2 observations")
        cov = np.atleast_2d(np.cov(table.values[idx].T, ddof=1))
        w, v = np.linalg.eigh(cov)
        keep = w > eig_threshold
        if not keep.any():
            raise DataError(f"week {label[0]}-W{label[1]:02d} has zero covariance (constant prices)")
        order = np.argsort(w[keep])[::-1]
        bases.append(v[:, keep][:, order])
        cov_idx.append((monday - first).days // 7)
        weeks.append(label)
    if not bases:
        raise DataError("no complete weeks in the price table")
    data = Dataset(np.array(cov_idx, dtype=float)[:, None], tuple(bases), Grassmann(len(table.assets)), tuple(f"{y}-W{w:02d}" for y, w in weeks))
    return WeeklyBases(data, weeks, dropped)


def read_text(text: str):
    """Wrap a string for the readers (mainly for tests)."""
    return _io.StringIO(text)
