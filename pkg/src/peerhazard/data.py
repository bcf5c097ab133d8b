"""Dataset container and delimited file formats used by the CLI and harness."""

import csv
from dataclasses import dataclass

import numpy as np

from .net import Network


@dataclass(frozen=True)
class Sample:
    """Covariates, network, horizon, and binary outcomes for one dataset."""

    net: Network
    X: np.ndarray
    y: np.ndarray
    S: float

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y)
        if X.shape[0] != self.net.n or y.shape[0] != self.net.n:
            raise ValueError(
                f"dimension mismatch: network n={self.net.n}, "
                f"X rows={X.shape[0]}, y rows={y.shape[0]}"
            )
        if not np.isin(y, (0, 1)).all():
            raise ValueError("outcomes must be binary")
        if not self.S > 0:
            raise ValueError("horizon S must be positive")
        y = y.astype(np.int8)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "S", float(self.S))

    @property
    def n(self) -> int:
        return self.net.n

    @property
    def p(self) -> int:
        return self.X.shape[1]


def write_covariates(X: np.ndarray, path) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"x{j + 1}" for j in range(X.shape[1])])
        for i, row in enumerate(X):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_covariates(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "id":
            raise ValueError(f"{path}: expected header starting with 'id'")
        p = len(header) - 1
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != p + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}"
                )
            try:
                i = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
            rows[i] = vals
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: ids must be 0..n-1 without gaps")
    return np.array([rows[i] for i in range(len(rows))], dtype=float)


def write_outcomes(y: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "y"])
        for i, v in enumerate(np.asarray(y)):
            w.writerow([i, int(v)])


def read_outcomes(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "y"]:
            raise ValueError(f"{path}: expected header 'id,y'")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                i, v = int(row[0]), int(row[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
            if v not in (0, 1):
                raise ValueError(f"{path}:{lineno}: outcome must be 0 or 1, got {v}")
            rows[i] = v
    if sorted(rows) != list(range(len(rows))):
        raise ValueError(f"{path}: ids must be 0..n-1 without gaps")
    return np.array([rows[i] for i in range(len(rows))], dtype=np.int8)
