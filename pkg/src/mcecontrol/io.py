"""CSV ingestion and plain-text key=value serialization."""
from __future__ import annotations

import csv
import math
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import MissingColumn, ParseError
from .ranks import BivariateSample

__all__ = ["load_csv", "fixture_path", "fmt", "write_kv", "read_kv", "write_csv", "parse_rows"]

PathLike = Union[str, Path]


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file (``quesenberry.csv``, ``madawaska.csv``, ...)."""
    return Path(str(resources.files("mcecontrol") / "fixtures" / name))


def fmt(v) -> str:
    """Nine significant digits for floats; other values via ``str``."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def load_csv(path: PathLike, x_column: Optional[str] = None, y_column: Optional[str] = None) -> BivariateSample:
    """Read a header CSV into a :class:`BivariateSample`.

    Without column names the first two columns are used. Rows keep their
    file order. Blank lines are skipped.

    Raises
    ------
    ParseError
        Non-numeric or missing values (with the 1-based file line number) or
        no data rows.
    MissingColumn
        A requested column is not in the header.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if any(c.strip() for c in row):
                header = [c.strip() for c in row]
                break
        if header is None:
            raise ParseError(f"{path}: no header row", line=1)
        names = [x_column or header[0], y_column or (header[1] if len(header) > 1 else "")]
        idx = []
        for nm in names:
            if nm not in header:
                raise MissingColumn(f"{path}: column {nm!r} not in header {header}")
            idx.append(header.index(nm))
        xs: List[float] = []
        ys: List[float] = []
        for row in reader:
            if not any(c.strip() for c in row):
                continue
            try:
                vals = [float(row[i]) for i in idx]
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}: bad value ({exc})", line=reader.line_num) from exc
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: non-finite value", line=reader.line_num)
            xs.append(vals[0])
            ys.append(vals[1])
    if not xs:
        raise ParseError(f"{path}: no data rows")
    if len(xs) < 2:
        raise ParseError(f"{path}: at least two data rows are needed")
    return BivariateSample(np.array(xs), np.array(ys), (names[0], names[1]))


def parse_rows(spec: str, n: int) -> np.ndarray:
    """0-based indices from a 1-based spec such as ``"1-20"``, ``"21-"`` or ``"all"``."""
    spec = spec.strip()
    if spec in ("", "all"):
        return np.arange(n)
    out: List[int] = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            lo = int(a) if a else 1
            hi = int(b) if b else n
            out.extend(range(lo - 1, hi))
        else:
            out.append(int(part) - 1)
    arr = np.array(out, dtype=int)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError(f"row spec {spec!r} out of range 1..{n}")
    return arr


def write_kv(path: PathLike, items: Mapping[str, object], header: Optional[str] = None) -> None:
    lines = [f"# {header}"] if header else []
    lines += [f"{k}={fmt(v)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_kv(path: PathLike) -> Dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    for num, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}: expected key=value", line=num)
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
