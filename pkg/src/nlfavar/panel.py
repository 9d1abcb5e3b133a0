"""Quarterly macro panel: ingestion, transformation codes, standardization.

The input CSV follows the FRED-QD layout: the first row holds mnemonics, the
second row holds integer transformation codes and the first column holds
dates.  Series metadata (speed class and group label) come from a sidecar CSV
with columns ``mnemonic, speed, group`` and, optionally, ``transform_code``
and ``description``.

Transformation codes
--------------------
1   level, no transformation
5   one-quarter log difference, ``log x_t - log x_{t-1}``
50  year-on-year log difference, ``log x_t - log x_{t-4}``
7   first difference of the net growth rate, ``(x_t/x_{t-1} - 1) - (x_{t-1}/x_{t-2} - 1)``
"""
import csv
import io
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import pandas as pd

from .errors import CodeError, DateError, DegenerateSeriesError, DomainError, FormatError, MetadataError

TRANSFORM_CODES = (1, 5, 50, 7)
SPEEDS = ("slow", "fast", "policy", "observed")
# rows lost at the start of the sample under each code
CODE_LAGS = {1: 0, 5: 1, 50: 4, 7: 2}


@dataclass(frozen=True)
class SeriesMeta:
    mnemonic: str
    transform_code: int = 1
    speed: str = "slow"
    group: str = ""
    description: str = ""

    def __post_init__(self):
        if self.transform_code not in TRANSFORM_CODES:
            raise CodeError(f"{self.mnemonic}: unknown transform code {self.transform_code!r}")
        if self.speed is not None and self.speed not in SPEEDS:
            raise MetadataError(f"{self.mnemonic}: unknown speed {self.speed!r}")


@dataclass
class Panel:
    """Dated T x N matrix of observed series.

    ``standardization`` is an N x 2 array of (mean, std) pairs once
    :func:`standardize` has been applied, otherwise ``None``.
    """

    dates: pd.DatetimeIndex
    values: np.ndarray
    meta: tuple
    standardization: np.ndarray = None
    transformed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.dates = pd.DatetimeIndex(self.dates)
        self.meta = tuple(self.meta)
        if self.values.ndim != 2:
            raise FormatError("panel values must be a 2-D matrix")
        T, N = self.values.shape
        if len(self.dates) != T:
            raise FormatError(f"{len(self.dates)} dates for {T} rows")
        if len(self.meta) != N:
            raise FormatError(f"{len(self.meta)} metadata records for {N} columns")
        check_quarterly(self.dates)

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1]

    @property
    def mnemonics(self):
        return [m.mnemonic for m in self.meta]

    def column(self, mnemonic):
        return self.values[:, self.index(mnemonic)]

    def index(self, mnemonic):
        try:
            return self.mnemonics.index(mnemonic)
        except ValueError:
            raise MetadataError(f"unknown mnemonic {mnemonic!r}") from None

    def select(self, mnemonics):
        idx = [self.index(m) for m in mnemonics]
        std = None if self.standardization is None else self.standardization[idx]
        return Panel(self.dates, self.values[:, idx], [self.meta[i] for i in idx], std, self.transformed)

    def rows(self, start=None, stop=None):
        """Positional row slice ``[start, stop)``."""
        sl = slice(start, stop)
        return Panel(self.dates[sl], self.values[sl], self.meta, self.standardization, self.transformed)

    def between(self, start_date=None, end_date=None):
        """Slice by date, both ends inclusive."""
        mask = np.ones(self.T, dtype=bool)
        if start_date is not None:
            mask &= self.dates >= pd.Timestamp(start_date)
        if end_date is not None:
            mask &= self.dates <= pd.Timestamp(end_date)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise DateError(f"no observations between {start_date} and {end_date}")
        return self.rows(idx[0], idx[-1] + 1)

    def to_frame(self):
        return pd.DataFrame(self.values, index=self.dates, columns=self.mnemonics)


def check_quarterly(dates):
    if len(dates) < 2:
        return
    periods = pd.PeriodIndex(dates, freq="Q")
    steps = np.diff(periods.asi8)
    if np.any(steps != 1):
        bad = int(np.flatnonzero(steps != 1)[0])
        raise DateError(f"dates are not consecutive quarters: {dates[bad].date()} -> {dates[bad + 1].date()}")


def quarterly_dates(start, periods):
    return pd.period_range(start=start, periods=periods, freq="Q").to_timestamp(how="start")


# --------------------------------------------------------------------------- I/O


def load_metadata(path=None):
    """Read a sidecar metadata CSV into ``{mnemonic: dict}``.

    With ``path=None`` the bundled FRED-QD table is used.
    """
    if path is None:
        text = resources.files("nlfavar.data").joinpath("fredqd_meta.csv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"mnemonic", "speed", "group"} <= set(reader.fieldnames):
        raise FormatError("metadata file needs columns mnemonic, speed, group")
    out = {}
    for row in reader:
        mn = row["mnemonic"].strip()
        if mn in out:
            raise MetadataError(f"duplicate mnemonic {mn!r} in metadata")
        rec = {"speed": row["speed"].strip() or None, "group": row["group"].strip()}
        if row.get("transform_code"):
            rec["transform_code"] = int(row["transform_code"])
        if row.get("description"):
            rec["description"] = row["description"].strip()
        out[mn] = rec
    return out


def load_csv(path, metadata=None, select=False):
    """Load a raw (untransformed) panel.

    Parameters
    ----------
    path : str or path-like
        CSV in FRED-QD layout.  A FRED-QD ``factors`` row between the
        mnemonic row and the code row is tolerated.
    metadata : dict, str or None
        Output of :func:`load_metadata`, a path to a sidecar file, or None for
        no metadata (speed unset, empty group).
    select : bool
        Keep only the columns listed in ``metadata``, in metadata order.
        Codes in the metadata override the codes row of the file.
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if raw.shape[0] < 3 or raw.shape[1] < 2:
        raise FormatError(f"{path}: need a mnemonic row, a code row and at least one observation")
    names = [c.strip() for c in raw.iloc[0, 1:]]
    if any(n == "" for n in names):
        raise FormatError(f"{path}: empty mnemonic in header")
    body_start = 1
    if raw.iloc[1, 0].strip().lower() == "factors":
        body_start = 2
    code_row = raw.iloc[body_start, 1:]
    try:
        codes = [int(float(c)) for c in code_row]
    except ValueError:
        raise FormatError(f"{path}: second row must hold integer transform codes") from None
    body = raw.iloc[body_start + 1:]
    body = body[body.iloc[:, 0].str.strip() != ""]
    try:
        dates = pd.DatetimeIndex(pd.to_datetime(body.iloc[:, 0].str.strip()))
    except (ValueError, TypeError) as exc:
        raise DateError(f"{path}: unparseable dates ({exc})") from exc
    cells = body.iloc[:, 1:].to_numpy(str)
    cells = np.char.strip(cells)
    try:
        values = np.where(cells == "", "nan", cells).astype(float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric cell ({exc})") from None

    if isinstance(metadata, (str,)) or hasattr(metadata, "__fspath__"):
        metadata = load_metadata(metadata)
    metadata = metadata or {}
    if len(set(names)) != len(names) and not select:
        dup = sorted({n for n in names if names.count(n) > 1})
        raise MetadataError(f"duplicate mnemonics in {path}: {dup}")
    if select:
        missing = [m for m in metadata if m not in names]
        if missing:
            raise MetadataError(f"{path}: series listed in metadata are absent: {missing}")
        idx = [names.index(m) for m in metadata]
    else:
        idx = list(range(len(names)))
    meta = []
    for i in idx:
        rec = metadata.get(names[i], {})
        code = rec.get("transform_code", codes[i])
        meta.append(
            SeriesMeta(
                names[i],
                transform_code=code,
                speed=rec.get("speed"),
                group=rec.get("group", ""),
                description=rec.get("description", ""),
            )
        )
    return Panel(dates, values[:, idx], meta)


def write_csv(panel, path, float_format="%.17g"):
    """Write in the same layout :func:`load_csv` reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + panel.mnemonics)
        w.writerow(["transform"] + [m.transform_code for m in panel.meta])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([d.strftime("%Y-%m-%d")] + ["" if np.isnan(v) else float_format % v for v in row])


# ------------------------------------------------------------------ transforms


def transform_series(x, code, name="series"):
    """Apply one transformation code; the result keeps the input length with NaN lead-in."""
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, np.nan)
    if code == 1:
        return x.copy()
    if code in (5, 50):
        finite = x[np.isfinite(x)]
        if np.any(finite <= 0):
            raise DomainError(f"{name}: nonpositive value under log transform code {code}")
        lx = np.log(x)
        lag = 1 if code == 5 else 4
        out[lag:] = lx[lag:] - lx[:-lag]
        return out
    if code == 7:
        if np.any(x[np.isfinite(x)] == 0):
            raise DomainError(f"{name}: zero value under growth-rate transform code 7")
        growth = np.full_like(x, np.nan)
        growth[1:] = x[1:] / x[:-1] - 1.0
        out[1:] = growth[1:] - growth[:-1]
        return out
    raise CodeError(f"{name}: unknown transform code {code!r}")


def apply_transforms(panel):
    """Transform every column by its code and drop the common burn-in rows."""
    if panel.transformed:
        return panel
    cols = [transform_series(panel.values[:, i], m.transform_code, m.mnemonic) for i, m in enumerate(panel.meta)]
    values = np.column_stack(cols) if cols else panel.values.copy()
    burn = max((CODE_LAGS[m.transform_code] for m in panel.meta), default=0)
    return Panel(panel.dates[burn:], values[burn:], panel.meta, None, True)


def standardize(panel):
    """Column z-scores with the 1/(T-1) variance convention."""
    X = panel.values
    if X.shape[0] < 2:
        raise DegenerateSeriesError("standardize needs at least two observations")
    bad = ~np.isfinite(X)
    if bad.any():
        col = int(np.flatnonzero(bad.any(axis=0))[0])
        raise DegenerateSeriesError(f"{panel.meta[col].mnemonic}: missing or non-finite values; imputation is not supported")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    zero = std <= 1e-14 * np.maximum(1.0, np.abs(mean))
    if zero.any():
        raise DegenerateSeriesError(f"{panel.meta[int(np.flatnonzero(zero)[0])].mnemonic}: zero variance")
    Z = (X - mean) / std
    return replace(panel, values=Z, standardization=np.column_stack([mean, std]))


def destandardize(values, standardization, columns=None):
    """Map z-scores back to transformed units."""
    s = standardization if columns is None else standardization[columns]
    return np.asarray(values) * s[:, 1] + s[:, 0]


def split_speeds(panel):
    """Partition columns by speed class.

    Returns
    -------
    slow, fast, observed : Panel
    policy : Panel
        At most one column.
    """
    names = panel.mnemonics
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise MetadataError(f"duplicate mnemonics: {dup}")
    unlabeled = [m.mnemonic for m in panel.meta if m.speed not in SPEEDS]
    if unlabeled:
        raise MetadataError(f"series without a speed label: {unlabeled}")
    groups = {s: [m.mnemonic for m in panel.meta if m.speed == s] for s in SPEEDS}
    if len(groups["policy"]) > 1:
        raise MetadataError(f"more than one policy series: {groups['policy']}")
    return tuple(panel.select(groups[s]) for s in ("slow", "fast", "observed", "policy"))


@dataclass(frozen=True)
class PreparedPanel:
    """Transformed panel split into what enters the reducer and what enters the VAR."""

    informational: Panel  # standardized; feeds the reducer and the loadings
    observed: Panel  # transformed units; enters the VAR directly
    policy: Panel  # transformed units; empty when absent
    raw: Panel = field(repr=False, default=None)


def prepare(panel, start_date=None, end_date=None):
    """Transform, slice by date, and split a raw panel for the FAVAR pipeline."""
    tp = apply_transforms(panel)
    if start_date is not None or end_date is not None:
        tp = tp.between(start_date, end_date)
    slow, fast, observed, policy = split_speeds(tp)
    info = tp.select(slow.mnemonics + fast.mnemonics)
    return PreparedPanel(standardize(info), observed, policy, tp)
