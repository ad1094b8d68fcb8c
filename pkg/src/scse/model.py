"""Seeded spatially coupled measurement ensembles.

A coupled ensemble splits the signal into L equal blocks and the
measurements into L row blocks.  The first ``w_s`` row blocks (the seed)
are oversampled at ratio ``alpha_s``; the remaining bulk blocks are
undersampled at ``alpha_b``.  Block (q, r) of the measurement matrix has
i.i.d. Gaussian entries of variance ``J[q, r] / N`` where the coupling
matrix J is banded with interaction range ``w`` and an interaction shape
that is either flat or linearly tilted.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ShapeKind(str, Enum):
    FLAT = "flat"
    TILTED = "tilted"


class BoundaryRule(str, Enum):
    TRUNCATE = "truncate"
    ROW_RENORMALIZE = "row_renormalize"


@dataclass(frozen=True)
class ShapeFunction:
    """Interaction shape g on [-1, 1]: flat 1/2, or tilted 1/2 + A*x."""

    kind: ShapeKind = ShapeKind.FLAT
    A: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if self.kind is ShapeKind.FLAT and self.A != 0.0:
            raise ValueError("flat shape takes no tilt; use kind='tilted'")
        if not -0.5 <= self.A <= 0.5:
            raise ValueError(f"tilt A={self.A} outside [-1/2, 1/2]; g would go negative")

    def g(self, x: float) -> float:
        """Raw (un-normalized) shape value; zero outside [-1, 1]."""
        if abs(x) > 1.0:
            return 0.0
        return 0.5 + self.A * x


def flat_shape() -> ShapeFunction:
    return ShapeFunction(ShapeKind.FLAT, 0.0)


def tilted_shape(A: float) -> ShapeFunction:
    return ShapeFunction(ShapeKind.TILTED, A)


@dataclass(frozen=True)
class CouplingSpec:
    """Full description of one seeded coupled ensemble."""

    L: int
    w: int
    w_s: int
    alpha_b: float
    alpha_s: float
    shape: ShapeFunction = field(default_factory=flat_shape)
    J: float = 1.0
    boundary: BoundaryRule = BoundaryRule.TRUNCATE

    def __post_init__(self):
        object.__setattr__(self, "boundary", BoundaryRule(self.boundary))
        if self.L < 1:
            raise ValueError("L must be a positive integer")
        if not 0 <= self.w < self.L:
            raise ValueError(f"need 0 <= w < L, got w={self.w}, L={self.L}")
        if not 0 <= self.w_s < self.L:
            raise ValueError(f"need 0 <= w_s < L, got w_s={self.w_s}, L={self.L}")
        if not 0.0 < self.alpha_b <= 1.0:
            raise ValueError(f"alpha_b={self.alpha_b} outside (0, 1]")
        if self.alpha_s <= 0.0:
            raise ValueError(f"alpha_s={self.alpha_s} must be positive")
        if self.J <= 0.0:
            raise ValueError(f"J={self.J} must be positive")
        if self.w_s > 0 and self.alpha_s < self.alpha_b:
            warnings.warn(
                f"alpha_s={self.alpha_s} < alpha_b={self.alpha_b}: seed weaker than bulk",
                stacklevel=2,
            )

    def to_json_dict(self) -> dict:
        return {
            "L": self.L,
            "w": self.w,
            "w_s": self.w_s,
            "alpha_b": self.alpha_b,
            "alpha_s": self.alpha_s,
            "shape": {"kind": self.shape.kind.value, "A": self.shape.A},
            "J": self.J,
            "boundary": self.boundary.value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CouplingSpec":
        shape = d.get("shape", {"kind": "flat", "A": 0.0})
        return cls(
            L=int(d["L"]),
            w=int(d["w"]),
            w_s=int(d["w_s"]),
            alpha_b=float(d["alpha_b"]),
            alpha_s=float(d["alpha_s"]),
            shape=ShapeFunction(ShapeKind(shape["kind"]), float(shape.get("A", 0.0))),
            J=float(d.get("J", 1.0)),
            boundary=BoundaryRule(d.get("boundary", "truncate")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, s: str) -> "CouplingSpec":
        return cls.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class ProblemParams:
    """Signal density rho and measurement-noise variance delta."""

    rho: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho={self.rho} outside (0, 1]")
        if self.delta < 0.0:
            raise ValueError(f"delta={self.delta} must be non-negative")


def shape_normalization(shape: ShapeFunction, w: int) -> float:
    """Discrete normalization c_w = (1/w) * sum_{z=-w..w} g(z/w).

    The linear tilt cancels over the symmetric range, so c_w depends only
    on w: c_w = (2w + 1) / (2w).
    """
    if w < 1:
        raise ValueError("normalization needs w >= 1")
    return sum(shape.g(z / w) for z in range(-w, w + 1)) / w


def shape_weight(shape: ShapeFunction, z: int, w: int) -> float:
    """Normalized discrete shape g(z/w)/c_w; zero for |z| > w.

    Satisfies (1/w) * sum_{z=-w..w} shape_weight(z) = 1 exactly.
    """
    if w < 1:
        raise ValueError("shape_weight needs w >= 1 (w=0 is the uncoupled identity case)")
    if abs(z) > w:
        return 0.0
    return shape.g(z / w) / shape_normalization(shape, w)


def build_coupling_matrix(spec: CouplingSpec) -> np.ndarray:
    """L x L banded coupling matrix J_qr.

    Entries are (J/w) * shape_weight(r - q, w); out-of-range neighbors are
    dropped (truncate) or each row is rescaled to sum J (row_renormalize).
    Interior rows sum to J in both conventions.  w = 0 gives J * identity.
    """
    L, w, J = spec.L, spec.w, spec.J
    if w == 0:
        return J * np.eye(L)
    c_w = shape_normalization(spec.shape, w)
    offsets = np.arange(-w, w + 1)
    band = np.array([(J / w) * spec.shape.g(z / w) / c_w for z in offsets])
    mat = np.zeros((L, L))
    for z, v in zip(offsets, band):
        if v == 0.0:
            continue
        idx = np.arange(max(0, -z), min(L, L - z))
        mat[idx, idx + z] = v
    if spec.boundary is BoundaryRule.ROW_RENORMALIZE:
        mat *= (J / mat.sum(axis=1))[:, None]
    return mat


def build_alpha_profile(spec: CouplingSpec) -> np.ndarray:
    """Per-block undersampling ratios: alpha_s on the first w_s blocks, alpha_b after."""
    alphas = np.full(spec.L, spec.alpha_b)
    alphas[: spec.w_s] = spec.alpha_s
    return alphas


def effective_alpha(spec: CouplingSpec) -> float:
    """System-averaged undersampling ratio (alpha_b*(L-w_s) + alpha_s*w_s) / L."""
    return (spec.alpha_b * (spec.L - spec.w_s) + spec.alpha_s * spec.w_s) / spec.L
