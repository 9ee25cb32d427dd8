"""CSV ingestion with column-role mappings, result documents and benchmark tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .momentmodel import Dataset, MomentModel, RankDeficient

__all__ = [
    "ColumnMapping",
    "HeaderMismatch",
    "NonNumericCell",
    "MissingCell",
    "RankDeficient",
    "ingest_csv",
    "load_mapping",
    "mapping_template",
    "write_results",
    "write_draws_csv",
    "read_draws_csv",
    "BenchmarkTable",
    "render_table",
    "table_csv",
]

ALGORITHM_COLUMNS = [("ram", "MCMC"), ("da", "DA-MCMC"), ("mda-exact", "Exact"), ("mda-approx", "Approx")]


class HeaderMismatch(KeyError):
    pass


class NonNumericCell(ValueError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a number")
        self.row = row
        self.column = column


class MissingCell(ValueError):
    def __init__(self, row: int, column: str):
        super().__init__(f"row {row}, column {column!r}: missing value")
        self.row = row
        self.column = column


@dataclass(frozen=True)
class ColumnMapping:
    outcome: str
    endogenous: list[str]
    instruments: list[str]
    exogenous: list[str] = field(default_factory=list)
    add_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "endogenous", list(self.endogenous))
        object.__setattr__(self, "instruments", list(self.instruments))
        object.__setattr__(self, "exogenous", list(self.exogenous))
        if len(self.instruments) != len(self.endogenous):
            raise ValueError(
                f"{len(self.instruments)} instruments for {len(self.endogenous)} endogenous regressors; "
                "the model must be exactly identified"
            )

    @property
    def columns(self) -> list[str]:
        seen: list[str] = []
        for c in [self.outcome, *self.endogenous, *self.instruments, *self.exogenous]:
            if c not in seen:
                seen.append(c)
        return seen

    @property
    def k(self) -> int:
        return int(self.add_intercept) + len(self.endogenous) + len(self.exogenous)

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        # Keys starting with "_" carry documentation only.
        d = {k: v for k, v in d.items() if not k.startswith("_")}
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "endogenous": self.endogenous,
            "instruments": self.instruments,
            "exogenous": self.exogenous,
            "add_intercept": self.add_intercept,
        }


def load_mapping(path) -> ColumnMapping:
    with open(path, encoding="utf-8") as fh:
        return ColumnMapping.from_dict(json.load(fh))


def mapping_template(name: str) -> ColumnMapping:
    """Shipped mapping for ``"ajr"`` or ``"movies"`` (data files are not included)."""
    text = resources.files("qgmm").joinpath("templates", f"{name.lower()}.json").read_text(encoding="utf-8")
    return ColumnMapping.from_dict(json.loads(text))


def _parse(cell: str, row: int, column: str) -> float:
    s = cell.strip()
    if s == "" or s.upper() in ("NA", "NAN", "."):
        raise MissingCell(row, column)
    try:
        v = float(s)
    except ValueError:
        raise NonNumericCell(row, column, cell) from None
    if math.isnan(v):
        raise MissingCell(row, column)
    return v


def read_columns(path, columns: list[str]) -> dict[str, np.ndarray]:
    """Read the named numeric columns; row numbers in errors count data rows from 1."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise HeaderMismatch(f"{path} is empty") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise HeaderMismatch(f"columns not found in {path.name}: {', '.join(missing)}")
        idx = {c: header.index(c) for c in columns}
        out: dict[str, list[float]] = {c: [] for c in columns}
        for r, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c in columns:
                j = idx[c]
                if j >= len(row):
                    raise MissingCell(r, c)
                out[c].append(_parse(row[j], r, c))
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}


def ingest_csv(path, mapping: ColumnMapping) -> Dataset:
    """Build ``X = [1, endogenous, exogenous]`` and ``Z = [1, instruments, exogenous]``."""
    cols = read_columns(path, mapping.columns)
    y = cols[mapping.outcome]
    n = y.shape[0]

    def stack(names: list[str]) -> np.ndarray:
        parts = [np.ones(n)] if mapping.add_intercept else []
        parts += [cols[c] for c in names]
        return np.column_stack(parts) if parts else np.empty((n, 0))

    X = stack(mapping.endogenous + mapping.exogenous)
    if mapping.instruments == mapping.endogenous:
        Z = X
    else:
        Z = stack(mapping.instruments + mapping.exogenous)
    data = Dataset(y=y, X=X, Z=Z)
    MomentModel(data)  # raises RankDeficient when Z'X is singular
    return data


def write_dataset_csv(data: Dataset, path) -> None:
    """Write ``y`` and the columns of X (and Z when it differs) with 17 significant digits."""
    k = data.k
    header = ["y"] + [f"x{j + 1}" for j in range(k)]
    blocks = [data.y[:, None], data.X]
    if data.Z is not data.X and not np.array_equal(data.Z, data.X):
        header += [f"z{j + 1}" for j in range(k)]
        blocks.append(data.Z)
    _write_matrix(path, header, np.hstack(blocks))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_matrix(path, header: list[str], a: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in a:
            w.writerow([_fmt(v) for v in row])


def write_draws_csv(draws: np.ndarray, path) -> None:
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    _write_matrix(path, [f"theta_{j + 1}" for j in range(draws.shape[1])], draws)


def read_draws_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    return np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def result_document(result, report) -> dict:
    """JSON-ready summary of one run and its mESS report."""
    return {
        "algorithm": result.algorithm.value,
        "prior": result.prior.family.value,
        "n": result.n,
        "k": result.k,
        "seed": result.config.seed,
        "draws_total": result.config.total_draws,
        "draws_retained": result.config.retained_draws,
        "accept_stage1": result.accept_stage1,
        "accept_stage2": result.accept_stage2,
        "sampling_seconds": result.sampling_seconds,
        "mess": report.mess,
        "mess_per_iter": report.mess_per_iter,
        "mess_per_sec": report.mess_per_sec,
    }


def write_results(result, report, path, draws_path=None) -> None:
    """Write the JSON result document and, if ``draws_path`` is given, the retained draws."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_document(result, report), fh, indent=2)
        fh.write("\n")
    if draws_path is not None:
        write_draws_csv(result.draws, draws_path)


@dataclass
class TableCell:
    mess_per_iter: float
    mess_per_sec: float | None
    completed: int
    requested: int


@dataclass
class BenchmarkTable:
    """Median efficiency per (label, n, k, algorithm)."""

    rows: dict[tuple[str, int, int, str], TableCell] = field(default_factory=dict)

    def add(self, label: str, n: int, k: int, algorithm: str, cell: TableCell) -> None:
        key = (label, int(n), int(k), str(algorithm))
        if key in self.rows:
            raise KeyError(f"duplicate table row {key}")
        if cell.mess_per_iter < 0 or (cell.mess_per_sec is not None and cell.mess_per_sec < 0):
            raise ValueError("medians must be nonnegative")
        self.rows[key] = cell

    def configs(self) -> list[tuple[str, int, int]]:
        return sorted({(lab, n, k) for lab, n, k, _ in self.rows}, key=lambda c: (c[1], c[2], c[0]))

    def get(self, label: str, n: int, k: int, algorithm: str) -> TableCell | None:
        return self.rows.get((label, n, k, algorithm))


def _panel(table: BenchmarkTable, value, title: str) -> list[str]:
    head = ["data", "n", "k"] + [name for _, name in ALGORITHM_COLUMNS]
    body = []
    for lab, n, k in table.configs():
        row = [lab, f"{n:,}", str(k)]
        for algo, _ in ALGORITHM_COLUMNS:
            cell = table.get(lab, n, k, algo)
            v = None if cell is None else value(cell)
            row.append("--" if v is None else v)
        body.append(row)
    widths = [max(len(r[j]) for r in [head, *body]) for j in range(len(head))]

    def line(r):
        first = r[0].ljust(widths[0])
        return "  ".join([first] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])])

    rule = "-" * len(line(head))
    return [title, rule, line(head), rule, *[line(r) for r in body], rule]


def render_table(table: BenchmarkTable) -> str:
    """Two-panel text table: (a) mESS/iter to 3 decimals, (b) mESS/s as grouped integers."""
    if not table.rows:
        raise ValueError("cannot render an empty table")
    a = _panel(table, lambda c: f"{c.mess_per_iter:.3f}", "(a) mESS/iter")
    b = _panel(
        table,
        lambda c: None if c.mess_per_sec is None else f"{round(c.mess_per_sec):,}",
        "(b) mESS/s",
    )
    return "\n".join(a + [""] + b) + "\n"


def table_csv(table: BenchmarkTable, include_timing: bool = False) -> str:
    """Machine-readable companion table.

    Without ``include_timing`` only seed-determined columns are written, so
    repeated runs with the same configuration give byte-identical output.
    """
    if not table.rows:
        raise ValueError("cannot render an empty table")
    header = ["data", "n", "k", "algorithm", "mess_per_iter", "completed", "replications"]
    if include_timing:
        header.append("mess_per_sec")
    lines = [",".join(header)]
    order = {a: i for i, (a, _) in enumerate(ALGORITHM_COLUMNS)}
    keys = sorted(table.rows, key=lambda r: (r[1], r[2], r[0], order.get(r[3], 99), r[3]))
    for key in keys:
        cell = table.rows[key]
        lab, n, k, algo = key
        vals = [lab, str(n), str(k), algo, _fmt(cell.mess_per_iter), str(cell.completed), str(cell.requested)]
        if include_timing:
            vals.append("" if cell.mess_per_sec is None else _fmt(cell.mess_per_sec))
        lines.append(",".join(_csv_field(v) for v in vals))
    return "\n".join(lines) + "\n"


def _csv_field(v: str) -> str:
    if any(ch in v for ch in ',"\n'):
        return '"' + v.replace('"', '""') + '"'
    return v
