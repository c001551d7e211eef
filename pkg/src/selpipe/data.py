"""Datasets with missing responses, the Gaussian response model, and variance
estimation.

The design matrix is always fully observed; only response entries may be
missing.  A :class:`MaskedDataset` keeps all ``n`` rows of ``X`` together with
the ``n_obs``-vector of observed responses and the boolean mask saying which
rows are missing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DegreesOfFreedomError,
    EmptyDataError,
    MalformedInputError,
    RankError,
)

DEFAULT_MISSING_TOKEN = "NaN"


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Validate and convert a 2-D array of finite floats (C-contiguous copy-free
    when possible)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_vector(y, name: str = "y", allow_nan: bool = False) -> np.ndarray:
    arr = np.asarray(y, dtype=float).ravel()
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if allow_nan and np.any(np.isinf(arr)):
        raise ValueError(f"{name} contains infinite values")
    return arr


@dataclass(frozen=True)
class MaskedDataset:
    """Design matrix with a response vector that may have missing entries.

    Attributes:
        X: full ``n x d`` design matrix (no missing cells allowed).
        y_obs: observed responses in original row order, length ``n_obs``.
        miss_mask: length-``n`` boolean vector, True where the response is
            missing.
        names: feature column names (synthesized as ``x0..x{d-1}`` when the
            data did not come from a file).
    """

    X: np.ndarray
    y_obs: np.ndarray
    miss_mask: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = as_float_matrix(self.X)
        y = as_float_vector(self.y_obs, "y_obs")
        mask = np.asarray(self.miss_mask, dtype=bool).ravel()
        if mask.shape[0] != X.shape[0]:
            raise ValueError("miss_mask length must equal number of rows of X")
        n_obs = int(X.shape[0] - mask.sum())
        if n_obs < 1:
            raise EmptyDataError("all responses are missing")
        if X.shape[1] < 1:
            raise EmptyDataError("dataset has no feature columns")
        if y.shape[0] != n_obs:
            raise ValueError(
                f"y_obs has length {y.shape[0]}, expected {n_obs} observed rows"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y_obs", y)
        object.__setattr__(self, "miss_mask", mask)
        names = tuple(self.names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("names length must match number of columns")
        object.__setattr__(self, "names", names)
        self.X.setflags(write=False)
        self.y_obs.setflags(write=False)
        self.miss_mask.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_obs(self) -> int:
        return self.y_obs.shape[0]

    @classmethod
    def from_response(cls, X, y, names: tuple[str, ...] = ()) -> "MaskedDataset":
        """Build from a full-length response where NaN marks missing entries."""
        y = as_float_vector(y, "y", allow_nan=True)
        mask = np.isnan(y)
        return cls(X=np.asarray(X, dtype=float), y_obs=y[~mask], miss_mask=mask,
                   names=names)

    def with_y_obs(self, y_obs: np.ndarray) -> "MaskedDataset":
        """Same design and mask, different observed response."""
        return MaskedDataset(X=self.X, y_obs=np.asarray(y_obs, dtype=float),
                             miss_mask=self.miss_mask, names=self.names)


@dataclass(frozen=True)
class GaussianModel:
    """Known (or plugged-in) noise level of the Gaussian response model."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")


def load_dataset(
    path: str | Path,
    missing_token: str = DEFAULT_MISSING_TOKEN,
    target: str | None = None,
) -> MaskedDataset:
    """Load a CSV with a header row; the response is the last column unless
    ``target`` names another one.

    Response cells equal to ``missing_token`` (exact, case-sensitive match)
    are marked missing; every other cell must parse as a finite real.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if target is None:
            target_idx = len(header) - 1
        else:
            try:
                target_idx = header.index(target)
            except ValueError:
                raise MalformedInputError(
                    f"{path}: target column {target!r} not in header {header}"
                ) from None
        feature_idx = [j for j in range(len(header)) if j != target_idx]
        if not feature_idx:
            raise EmptyDataError(f"{path}: no feature columns besides the response")

        rows: list[list[float]] = []
        responses: list[float] = []
        mask: list[bool] = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise MalformedInputError(
                    f"{path}: row {line_no} has {len(record)} cells, "
                    f"expected {len(header)}"
                )
            feats = []
            for j in feature_idx:
                cell = record[j].strip()
                try:
                    value = float(cell)
                except ValueError:
                    value = float("nan")
                if not np.isfinite(value):
                    raise MalformedInputError(
                        f"{path}: row {line_no}, column {header[j]!r}: "
                        f"cannot parse {cell!r} as a finite real"
                    )
                feats.append(value)
            cell = record[target_idx].strip()
            if cell == missing_token:
                mask.append(True)
            else:
                try:
                    value = float(cell)
                except ValueError:
                    value = float("nan")
                if not np.isfinite(value):
                    raise MalformedInputError(
                        f"{path}: row {line_no}, column {header[target_idx]!r}: "
                        f"cannot parse {cell!r} as a finite real"
                    )
                mask.append(False)
                responses.append(value)
            rows.append(feats)

    if not rows:
        raise EmptyDataError(f"{path}: no data rows")
    if not responses:
        raise EmptyDataError(f"{path}: every response is missing")
    return MaskedDataset(
        X=np.asarray(rows, dtype=float),
        y_obs=np.asarray(responses, dtype=float),
        miss_mask=np.asarray(mask, dtype=bool),
        names=tuple(header[j] for j in feature_idx),
    )


def estimate_variance(X, y_full) -> float:
    """Residual-based noise variance: squared residual norm of the least
    squares fit of ``y_full`` on all columns of ``X``, divided by ``n - d``.

    ``y_full`` must be fully observed (impute first when responses were
    missing).
    """
    X = as_float_matrix(X)
    y = as_float_vector(y_full, "y_full")
    n, d = X.shape
    if y.shape[0] != n:
        raise ValueError(f"y_full has length {y.shape[0]}, expected {n}")
    if n <= d:
        raise DegreesOfFreedomError(
            f"variance estimation needs n > d, got n={n}, d={d}"
        )
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < d:
        raise RankError(f"design matrix has rank {rank} < {d} columns")
    resid = y - X @ coef
    return float(resid @ resid / (n - d))
