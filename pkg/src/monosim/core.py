"""Domain types shared by every stage: samples, activations, hypotheses,
squared loss and label truncation, plus the dataset file formats."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RegularityParams:
    """Sup bound, derivative L2 bound, and target accuracy of the activation class."""

    B: float
    L: float
    eps: float

    def __post_init__(self):
        if not (self.B > 0 and self.L > 0 and self.eps > 0):
            raise ValueError("B, L and eps must all be strictly positive")


# ---------------------------------------------------------------------------
# activations


class Activation:
    """Monotone univariate function with an (a.e.) derivative.

    ``derivative`` returns the right derivative at kinks.  Subclasses whose
    derivative is piecewise constant expose ``derivative_steps`` so oracle
    code can use closed-form Gaussian smoothing.
    """

    regularity: RegularityParams | None = None

    def evaluate(self, z):
        raise NotImplementedError

    def derivative(self, z):
        raise NotImplementedError

    def derivative_steps(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(edges, levels) with len(levels) == len(edges) + 1, or None."""
        return None

    def __call__(self, z):
        return self.evaluate(z)


@dataclass
class GeneralReLU(Activation):
    """z -> max(0, z + bias)."""

    bias: float = 0.0

    def evaluate(self, z):
        return np.maximum(0.0, np.asarray(z, dtype=float) + self.bias)

    def derivative(self, z):
        return np.where(np.asarray(z, dtype=float) + self.bias >= 0.0, 1.0, 0.0)

    def derivative_steps(self):
        return np.array([-self.bias]), np.array([0.0, 1.0])


@dataclass
class BiasedThreshold(Activation):
    """z -> 1{z + bias >= 0}, closed on the right at the jump."""

    bias: float = 0.0

    def evaluate(self, z):
        return np.where(np.asarray(z, dtype=float) + self.bias >= 0.0, 1.0, 0.0)

    def derivative(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def derivative_steps(self):
        return np.array([]), np.array([0.0])


@dataclass
class BoundedSmooth(Activation):
    """Monotone activation given by explicit callables for sigma and sigma'."""

    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    breaks: tuple[float, ...] = ()

    def evaluate(self, z):
        return np.asarray(self.fn(np.asarray(z, dtype=float)), dtype=float)

    def derivative(self, z):
        return np.asarray(self.deriv(np.asarray(z, dtype=float)), dtype=float)


@dataclass
class PiecewiseLinearMonotone(Activation):
    """Non-decreasing piecewise-linear function, constant outside the knots."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.knots.ndim != 1 or self.knots.shape != self.values.shape:
            raise ValueError("knots and values must be 1-d arrays of equal length")
        if self.knots.size == 0:
            raise ValueError("need at least one knot")
        if self.knots.size > 1:
            dz = np.diff(self.knots)
            if np.any(dz <= 0):
                raise ValueError("knots must be strictly increasing")
            if np.any(np.diff(self.values) < 0):
                raise ValueError("values must be non-decreasing")

    def evaluate(self, z):
        return np.interp(np.asarray(z, dtype=float), self.knots, self.values)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.knots.size == 1:
            return np.zeros_like(z)
        slopes = np.diff(self.values) / np.diff(self.knots)
        # right derivative: the segment starting at the knot
        seg = np.searchsorted(self.knots, z, side="right") - 1
        seg = np.clip(seg, 0, slopes.size - 1)
        out = slopes[seg]
        return np.where((z < self.knots[0]) | (z >= self.knots[-1]), 0.0, out)

    def derivative_steps(self):
        if self.knots.size == 1:
            return np.array([]), np.array([0.0])
        slopes = np.diff(self.values) / np.diff(self.knots)
        return self.knots.copy(), np.concatenate(([0.0], slopes, [0.0]))

    @property
    def max_slope(self) -> float:
        if self.knots.size == 1:
            return 0.0
        return float(np.max(np.diff(self.values) / np.diff(self.knots)))


def evaluate(activation: Activation, z):
    return activation.evaluate(z)


def derivative(activation: Activation, z):
    return activation.derivative(z)


def activation_to_dict(act: Activation) -> dict:
    if isinstance(act, GeneralReLU):
        return {"kind": "general_relu", "bias": act.bias}
    if isinstance(act, BiasedThreshold):
        return {"kind": "biased_threshold", "bias": act.bias}
    if isinstance(act, PiecewiseLinearMonotone):
        return {
            "kind": "piecewise_linear",
            "knots": act.knots.tolist(),
            "values": act.values.tolist(),
        }
    raise ValueError(f"activation {act!r} has no serialized form")


def activation_from_dict(d: dict) -> Activation:
    kind = d["kind"]
    if kind == "general_relu":
        return GeneralReLU(bias=float(d["bias"]))
    if kind == "biased_threshold":
        return BiasedThreshold(bias=float(d["bias"]))
    if kind == "piecewise_linear":
        return PiecewiseLinearMonotone(np.asarray(d["knots"]), np.asarray(d["values"]))
    raise ValueError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# samples and datasets


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: float


class Dataset:
    """Immutable collection of (x, y) pairs with x of a fixed dimension."""

    def __init__(self, X: np.ndarray, y: np.ndarray, validate: bool = True):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n, d) and y (n,) with matching n")
        if X.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if validate and not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("samples must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def samples(self) -> Iterator[Sample]:
        for i in range(self.n):
            yield Sample(self.X[i], float(self.y[i]))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], validate=False)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    # -- file formats ------------------------------------------------------

    def save_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"d={self.dim} n={self.n}\n")
            for i in range(self.n):
                row = " ".join(repr(float(v)) for v in self.X[i])
                fh.write(f"{row} {float(self.y[i])!r}\n")

    def save_binary(self, path) -> None:
        with open(path, "wb") as fh:
            np.array([self.dim, self.n], dtype="<u8").tofile(fh)
            rows = np.empty((self.n, self.dim + 1))
            rows[:, : self.dim] = self.X
            rows[:, self.dim] = self.y
            rows.astype("<f8").tofile(fh)

    @staticmethod
    def load(path) -> "Dataset":
        with open(path, "rb") as fh:
            head = fh.read(2)
        if head == b"d=":
            return Dataset._load_text(path)
        return Dataset._load_binary(path)

    @staticmethod
    def _load_text(path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            d = int(header[0].split("=")[1])
            n = int(header[1].split("=")[1])
            body = np.loadtxt(fh, ndmin=2)
        if body.shape != (n, d + 1):
            raise ValueError(f"expected {n} rows of {d + 1} values in {path}")
        return Dataset(body[:, :d], body[:, d])

    @staticmethod
    def _load_binary(path) -> "Dataset":
        with open(path, "rb") as fh:
            d, n = np.fromfile(fh, dtype="<u8", count=2)
            body = np.fromfile(fh, dtype="<f8").reshape(int(n), int(d) + 1)
        return Dataset(body[:, : int(d)], body[:, int(d)])


# ---------------------------------------------------------------------------
# hypotheses


@dataclass
class Hypothesis:
    """A unit direction paired with a piecewise-linear monotone activation."""

    w: np.ndarray
    u: PiecewiseLinearMonotone
    lipschitz_bound: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        nrm = np.linalg.norm(self.w)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"direction must be unit norm, got {nrm}")
        self.w = self.w / nrm
        if self.lipschitz_bound < 0:
            raise ValueError("lipschitz_bound must be non-negative")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.u.evaluate(X @ self.w)

    def to_dict(self, B: float | None = None) -> dict:
        return {
            "dim": int(self.w.size),
            "w": self.w.tolist(),
            "knots": self.u.knots.tolist(),
            "values": self.u.values.tolist(),
            "beta": float(self.lipschitz_bound),
            "B": None if B is None else float(B),
        }

    @staticmethod
    def from_dict(d: dict) -> "Hypothesis":
        return Hypothesis(
            w=np.asarray(d["w"], dtype=float),
            u=PiecewiseLinearMonotone(np.asarray(d["knots"]), np.asarray(d["values"])),
            lipschitz_bound=float(d["beta"]),
        )

    def save(self, path, B: float | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(B), fh)
            fh.write("\n")

    @staticmethod
    def load(path) -> "Hypothesis":
        with open(path, "r", encoding="utf-8") as fh:
            return Hypothesis.from_dict(json.load(fh))


def constant_hypothesis(value: float, dim: int) -> Hypothesis:
    w = np.zeros(dim)
    w[0] = 1.0
    return Hypothesis(w=w, u=PiecewiseLinearMonotone([0.0], [value]), lipschitz_bound=0.0)


# ---------------------------------------------------------------------------
# loss and truncation


def truncate_labels(data: Dataset, B: float) -> Dataset:
    """Clip labels to [-B, B] as sign(y) * min(|y|, B)."""
    if B <= 0:
        raise ValueError("B must be positive")
    y = np.sign(data.y) * np.minimum(np.abs(data.y), B)
    return Dataset(data.X, y, validate=False)


def squared_loss(data: Dataset, hyp: Hypothesis) -> float:
    if data.dim != hyp.w.size:
        raise DimensionMismatch(f"data dim {data.dim} != hypothesis dim {hyp.w.size}")
    resid = hyp.predict(data.X) - data.y
    return float(np.mean(resid * resid))
