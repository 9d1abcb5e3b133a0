import os
from pathlib import Path

import numpy as np
import pytest

from nlfavar.panel import Panel, SeriesMeta, load_metadata, quarterly_dates, write_csv


def write_toy_csv(path, names, codes, rows, start="2000-01-01", dates=None):
    dates = dates or [d.strftime("%Y-%m-%d") for d in quarterly_dates(start, len(rows))]
    lines = ["date," + ",".join(names), "transform," + ",".join(str(c) for c in codes)]
    for d, row in zip(dates, rows):
        lines.append(d + "," + ",".join("" if v is None else repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def fake_fredqd(path, T=140, seed=0, start="1985-01-01"):
    """FRED-QD shaped file covering every bundled mnemonic, driven by three AR(1) factors."""
    meta = load_metadata()
    names = list(meta)
    rng = np.random.default_rng(seed)
    F = np.zeros((T, 3))
    for t in range(1, T):
        F[t] = 0.8 * F[t - 1] + 0.5 * rng.standard_normal(3)
    E = F @ (0.3 * rng.standard_normal((3, len(names)))) + 0.3 * rng.standard_normal((T, len(names)))
    vals = np.empty_like(E)
    recs = []
    for j, n in enumerate(names):
        code = meta[n]["transform_code"]
        vals[:, j] = 100 * np.exp(np.cumsum(0.01 * E[:, j])) if code in (5, 50, 7) else E[:, j] + 5.0
        recs.append(SeriesMeta(n, code))
    write_csv(Panel(quarterly_dates(start, T), vals, recs), path)
    return path


@pytest.fixture
def fake_data(tmp_path):
    return fake_fredqd(tmp_path / "fredqd.csv")


def fredqd_path():
    """Real FRED-QD file if one is available, else None."""
    env = os.environ.get("FAVAR_FREDQD_PATH")
    for cand in (env, Path(__file__).resolve().parents[1] / "data" / "fred_qd.csv"):
        if cand and Path(cand).is_file():
            return Path(cand)
    return None


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_criterion(key, status, detail=""):
    ACCEPTANCE[key] = (status, detail)
    print(f"criterion {key}: {status} {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    order = lambda k: (int(str(k).split()[0]), str(k))
    for key in sorted(ACCEPTANCE, key=order):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {status}" + (f"  {detail}" if detail else ""))
