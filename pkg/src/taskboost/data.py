"""Multi-task tabular data: loading, task bookkeeping, deterministic splits.

A Dataset holds a sparse row-major view of the feature matrix (absent cell =
missing value), binary or real labels, and a dense task id per row.  Task ids
are remapped to [0, T) in first-appearance order at load time; the original
identifiers are kept for reporting.  Datasets are immutable after construction
and safe to share across workers.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


def _stable_task_key(label: str) -> int:
    """Platform-independent integer key for a task label (for seeding)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class FeatureColumn:
    """Column view of one feature: present rows only, two orderings."""

    rows_asc: np.ndarray        # present row ids, ascending
    values_asc: np.ndarray      # values aligned with rows_asc
    rows_by_value: np.ndarray   # present row ids, sorted by value (stable)
    values_sorted: np.ndarray   # values aligned with rows_by_value


@dataclass
class Dataset:
    """Immutable multi-task dataset with missing-cell support.

    Feature values are stored row-major in CSR-style arrays so that fully
    sparse inputs (e.g. bag-of-words rows) never get densified.  A cell that
    is not stored is a missing value, not a zero.
    """

    n_rows: int
    n_features: int
    n_tasks: int
    indptr: np.ndarray      # int64, len n_rows + 1
    col_idx: np.ndarray     # int64, feature index per stored cell
    vals: np.ndarray        # float64, value per stored cell
    labels: np.ndarray      # float64, len n_rows
    task_of: np.ndarray     # int64, dense task id per row
    task_labels: list[str]  # original task identifiers, index = dense id
    feature_names: list[str]
    label_name: str = "label"
    task_name: str = "task"
    _columns: list[FeatureColumn] | None = field(default=None, repr=False, compare=False)
    _flat: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if len(self.labels) != self.n_rows or len(self.task_of) != self.n_rows:
            raise DataError("labels/task_of length does not match n_rows")
        if self.n_tasks != len(self.task_labels):
            raise DataError("task_labels length does not match n_tasks")
        if self.n_rows and (self.task_of.min() < 0 or self.task_of.max() >= self.n_tasks):
            raise DataError("task_of contains ids outside [0, n_tasks)")
        counts = np.bincount(self.task_of, minlength=self.n_tasks)
        if self.n_tasks and counts.min() == 0:
            raise DataError("every task must have at least one row")

    @property
    def task_index(self) -> list[np.ndarray]:
        """Row indices of each task, ascending; partitions [0, n_rows)."""
        return [np.flatnonzero(self.task_of == t) for t in range(self.n_tasks)]

    @classmethod
    def from_dense(
        cls,
        values: np.ndarray,
        labels: np.ndarray,
        task_of: np.ndarray,
        task_labels: list[str] | None = None,
        feature_names: list[str] | None = None,
        label_name: str = "label",
        task_name: str = "task",
    ) -> "Dataset":
        """Build from a 2-D float array where NaN marks a missing cell."""
        values = np.asarray(values, dtype=np.float64)
        n_rows, n_features = values.shape
        present = ~np.isnan(values)
        counts = present.sum(axis=1)
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        col_idx = np.nonzero(present)[1].astype(np.int64)
        vals = values[present]
        task_of = np.asarray(task_of, dtype=np.int64)
        if task_labels is None:
            task_labels = [str(t) for t in range(int(task_of.max()) + 1 if n_rows else 0)]
        if feature_names is None:
            feature_names = [f"f{j}" for j in range(n_features)]
        return cls(
            n_rows=n_rows,
            n_features=n_features,
            n_tasks=len(task_labels),
            indptr=indptr,
            col_idx=col_idx,
            vals=np.ascontiguousarray(vals, dtype=np.float64),
            labels=np.asarray(labels, dtype=np.float64),
            task_of=task_of,
            task_labels=list(task_labels),
            feature_names=list(feature_names),
            label_name=label_name,
            task_name=task_name,
        )

    def to_dense(self) -> np.ndarray:
        """2-D float array with NaN in missing cells."""
        out = np.full((self.n_rows, self.n_features), np.nan)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.col_idx] = self.vals
        return out

    def value(self, row: int, feature: int) -> float:
        """Value at (row, feature), NaN if missing."""
        lo, hi = self.indptr[row], self.indptr[row + 1]
        pos = np.searchsorted(self.col_idx[lo:hi], feature)
        if pos < hi - lo and self.col_idx[lo + pos] == feature:
            return float(self.vals[lo + pos])
        return float("nan")

    def columns(self) -> list[FeatureColumn]:
        """Per-feature column views, built once and cached."""
        if self._columns is None:
            rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))
            order = np.argsort(self.col_idx, kind="stable")
            sorted_cols = self.col_idx[order]
            starts = np.searchsorted(sorted_cols, np.arange(self.n_features + 1))
            cols: list[FeatureColumn] = []
            for f in range(self.n_features):
                sel = order[starts[f]:starts[f + 1]]
                r_asc = rows[sel]
                v_asc = self.vals[sel]
                by_val = np.argsort(v_asc, kind="stable")
                cols.append(FeatureColumn(
                    rows_asc=r_asc,
                    values_asc=v_asc,
                    rows_by_value=r_asc[by_val],
                    values_sorted=v_asc[by_val],
                ))
            object.__setattr__(self, "_columns", cols)
        return self._columns

    def value_sorted_flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated value-sorted columns: (values, rows, feature starts).

        Layout consumed by the split-search kernel; built once and cached.
        """
        if self._flat is None:
            cols = self.columns()
            starts = np.zeros(self.n_features + 1, dtype=np.int64)
            np.cumsum([len(c.values_sorted) for c in cols], out=starts[1:])
            values = (
                np.concatenate([c.values_sorted for c in cols])
                if cols else np.zeros(0, dtype=np.float64)
            )
            rows = (
                np.concatenate([c.rows_by_value for c in cols])
                if cols else np.zeros(0, dtype=np.int64)
            )
            object.__setattr__(
                self, "_flat",
                (np.ascontiguousarray(values, dtype=np.float64),
                 np.ascontiguousarray(rows, dtype=np.int64),
                 starts),
            )
        return self._flat

    def column_values(self, feature: int, rows: np.ndarray) -> np.ndarray:
        """Values of one feature for the given rows (NaN where missing)."""
        col = self.columns()[feature]
        pos = np.searchsorted(col.rows_asc, rows)
        pos = np.minimum(pos, max(len(col.rows_asc) - 1, 0))
        out = np.full(len(rows), np.nan)
        if len(col.rows_asc):
            hit = col.rows_asc[pos] == rows
            out[hit] = col.values_asc[pos[hit]]
        return out

    def subset(self, rows: np.ndarray) -> tuple["Dataset", np.ndarray]:
        """Dataset restricted to `rows` (order preserved), tasks re-densified.

        Returns the new dataset and the kept rows (for index translation).
        """
        rows = np.asarray(rows, dtype=np.int64)
        lens = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        take = np.concatenate(
            [np.arange(self.indptr[r], self.indptr[r + 1]) for r in rows]
        ) if len(rows) else np.zeros(0, dtype=np.int64)
        old_tasks = self.task_of[rows]
        kept_ids = sorted(set(old_tasks.tolist()))
        remap = {old: new for new, old in enumerate(kept_ids)}
        new_task_of = np.array([remap[t] for t in old_tasks], dtype=np.int64)
        sub = Dataset(
            n_rows=len(rows),
            n_features=self.n_features,
            n_tasks=len(kept_ids),
            indptr=indptr,
            col_idx=self.col_idx[take],
            vals=self.vals[take],
            labels=self.labels[rows],
            task_of=new_task_of,
            task_labels=[self.task_labels[t] for t in kept_ids],
            feature_names=self.feature_names,
            label_name=self.label_name,
            task_name=self.task_name,
        )
        return sub, rows

    def equals(self, other: "Dataset") -> bool:
        return (
            self.n_rows == other.n_rows
            and self.n_features == other.n_features
            and self.n_tasks == other.n_tasks
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.vals, other.vals)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.task_of, other.task_of)
            and self.task_labels == other.task_labels
        )


@dataclass
class DataSplit:
    """Disjoint train/valid/test row-index sets covering the whole dataset."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int

    def save(self, path: str) -> None:
        """Three newline-separated index lists: train, valid, test."""
        with open(path, "w", encoding="utf-8") as fh:
            for part in (self.train, self.valid, self.test):
                fh.write(" ".join(str(int(i)) for i in part) + "\n")

    @classmethod
    def load(cls, path: str, seed: int = 0) -> "DataSplit":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if len(lines) < 3:
            raise DataError(f"split file {path!r} must have 3 lines, got {len(lines)}")
        parts = [np.array([int(x) for x in line.split()], dtype=np.int64) for line in lines[:3]]
        return cls(train=parts[0], valid=parts[1], test=parts[2], seed=seed)

    def restrict(self, rows: np.ndarray) -> "DataSplit":
        """Split translated into the index space of `Dataset.subset(rows)`."""
        lookup = {int(r): i for i, r in enumerate(rows)}
        def tr(part: np.ndarray) -> np.ndarray:
            return np.array(sorted(lookup[int(r)] for r in part if int(r) in lookup), dtype=np.int64)
        return DataSplit(train=tr(self.train), valid=tr(self.valid), test=tr(self.test), seed=self.seed)


def _validate_binary_labels(labels: np.ndarray, where: str) -> None:
    bad = ~np.isin(labels, (0.0, 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"{where}: non-binary label {labels[i]!r} at row {i}")


def load_csv(
    path: str,
    label_col: str,
    task_col: str,
    binary_labels: bool = True,
    encode_strings: bool = False,
) -> Dataset:
    """Load a UTF-8 CSV with a header row; empty cell = missing feature.

    Task ids are remapped to dense integers in first-appearance order.  With
    ``encode_strings`` non-numeric feature values are integer-coded per column
    (first appearance = 0); otherwise they are a parse error.
    """
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_col not in header:
            raise DataError(f"{path}: label column {label_col!r} not in header")
        if task_col not in header:
            raise DataError(f"{path}: task column {task_col!r} not in header")
        label_pos = header.index(label_col)
        task_pos = header.index(task_col)
        feat_pos = [i for i in range(len(header)) if i not in (label_pos, task_pos)]
        feature_names = [header[i] for i in feat_pos]

        labels: list[float] = []
        task_ids: list[int] = []
        task_map: dict[str, int] = {}
        indptr = [0]
        col_idx: list[int] = []
        vals: list[float] = []
        codes: list[dict[str, int]] = [dict() for _ in feat_pos]

        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            try:
                labels.append(float(row[label_pos]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {row[label_pos]!r}") from None
            key = row[task_pos]
            if key not in task_map:
                task_map[key] = len(task_map)
            task_ids.append(task_map[key])
            for j, raw_pos in enumerate(feat_pos):
                cell = row[raw_pos]
                if cell == "":
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    if not encode_strings:
                        raise DataError(
                            f"{path}:{lineno}: non-numeric value {cell!r} in column "
                            f"{header[raw_pos]!r} (use encode_strings to integer-code)"
                        ) from None
                    book = codes[j]
                    if cell not in book:
                        book[cell] = len(book)
                    v = float(book[cell])
                if v != v:  # a literal NaN cell is a missing value
                    continue
                col_idx.append(j)
                vals.append(v)
            indptr.append(len(col_idx))

    labels_arr = np.array(labels, dtype=np.float64)
    if binary_labels:
        _validate_binary_labels(labels_arr, path)
    return Dataset(
        n_rows=len(labels),
        n_features=len(feat_pos),
        n_tasks=len(task_map),
        indptr=np.array(indptr, dtype=np.int64),
        col_idx=np.array(col_idx, dtype=np.int64),
        vals=np.array(vals, dtype=np.float64),
        labels=labels_arr,
        task_of=np.array(task_ids, dtype=np.int64),
        task_labels=list(task_map),
        feature_names=feature_names,
        label_name=label_col,
        task_name=task_col,
    )


def save_csv(ds: Dataset, path: str) -> None:
    """Write a Dataset back to CSV; missing cells become empty strings.

    Values are written with repr so a reload reproduces them bit-exactly.
    """
    import csv

    def fmt(x: float) -> str:
        return repr(int(x)) if float(x).is_integer() else repr(float(x))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([ds.label_name, ds.task_name, *ds.feature_names])
        for r in range(ds.n_rows):
            cells = [""] * ds.n_features
            for k in range(ds.indptr[r], ds.indptr[r + 1]):
                cells[ds.col_idx[k]] = fmt(ds.vals[k])
            writer.writerow([fmt(ds.labels[r]), ds.task_labels[ds.task_of[r]], *cells])


def load_libsvm_mt(path: str, binary_labels: bool = True) -> Dataset:
    """Load the extended LIBSVM line format ``<label> <task> <idx>:<val> ...``.

    Feature indices are 1-based and must be strictly ascending within a line;
    unlisted indices are missing.  Rows stay sparse.
    """
    labels: list[float] = []
    task_ids: list[int] = []
    task_map: dict[str, int] = {}
    indptr = [0]
    col_idx: list[int] = []
    vals: list[float] = []
    max_idx = 0

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 2 or ":" in tokens[1]:
                raise DataError(f"{path}:{lineno}: missing task token")
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label {tokens[0]!r}") from None
            key = tokens[1]
            if key not in task_map:
                task_map[key] = len(task_map)
            task_ids.append(task_map[key])
            prev = 0
            for tok in tokens[2:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad feature token {tok!r}") from None
                if idx <= prev:
                    raise DataError(
                        f"{path}:{lineno}: feature indices must be ascending ({idx} after {prev})"
                    )
                prev = idx
                if val != val:  # explicit NaN means missing
                    continue
                col_idx.append(idx - 1)
                vals.append(val)
            max_idx = max(max_idx, prev)
            indptr.append(len(col_idx))

    labels_arr = np.array(labels, dtype=np.float64)
    if binary_labels:
        _validate_binary_labels(labels_arr, path)
    return Dataset(
        n_rows=len(labels),
        n_features=max_idx,
        n_tasks=len(task_map),
        indptr=np.array(indptr, dtype=np.int64),
        col_idx=np.array(col_idx, dtype=np.int64),
        vals=np.array(vals, dtype=np.float64),
        labels=labels_arr,
        task_of=np.array(task_ids, dtype=np.int64),
        task_labels=list(task_map),
        feature_names=[f"f{j}" for j in range(max_idx)],
    )


def split_dataset(
    ds: Dataset, ratios: tuple[float, float, float], seed: int
) -> DataSplit:
    """Per-task stratified shuffle split, deterministic in (ds, ratios, seed).

    Each task's rows are split at the given ratios using largest-remainder
    rounding with leftover rows preferring train, then valid; so every part
    differs from the exact ratio by less than one row per task.  Tasks with
    fewer than 3 rows go entirely to train with a warning.  Per-task shuffles
    are seeded from the task's original label, so a task's split does not
    depend on which other tasks are present.
    """
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")

    parts: tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]] = ([], [], [])
    for t in range(ds.n_tasks):
        rows = np.flatnonzero(ds.task_of == t)
        if len(rows) < 3:
            warnings.warn(
                f"task {ds.task_labels[t]!r} has {len(rows)} rows (<3); all go to train"
            )
            parts[0].append(rows)
            continue
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, _stable_task_key(ds.task_labels[t])])
        )
        shuffled = rows[rng.permutation(len(rows))]
        n = len(rows)
        exact = [n * r for r in ratios]
        alloc = [int(np.floor(e)) for e in exact]
        leftover = n - sum(alloc)
        # distribute leftovers by largest fractional part; ties favor train, then valid
        frac_order = sorted(range(3), key=lambda i: (-(exact[i] - alloc[i]), i))
        for i in range(leftover):
            alloc[frac_order[i % 3]] += 1
        a, b = alloc[0], alloc[0] + alloc[1]
        parts[0].append(shuffled[:a])
        parts[1].append(shuffled[a:b])
        parts[2].append(shuffled[b:])

    def collect(chunks: list[np.ndarray]) -> np.ndarray:
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(chunks)).astype(np.int64)

    return DataSplit(
        train=collect(parts[0]),
        valid=collect(parts[1]),
        test=collect(parts[2]),
        seed=seed,
    )


def subsample_per_task(
    ds: Dataset, rows: np.ndarray, fraction: float, seed: int
) -> np.ndarray:
    """Stratified row subsample: keep `fraction` of each task's rows."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"subsample fraction must be in (0,1], got {fraction}")
    if fraction == 1.0:
        return np.array(rows, dtype=np.int64)
    keep: list[np.ndarray] = []
    for t in range(ds.n_tasks):
        trows = rows[ds.task_of[rows] == t]
        if len(trows) == 0:
            continue
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, _stable_task_key(ds.task_labels[t]), 1])
        )
        k = max(1, int(round(fraction * len(trows))))
        keep.append(trows[np.sort(rng.choice(len(trows), size=k, replace=False))])
    return np.sort(np.concatenate(keep)).astype(np.int64)
