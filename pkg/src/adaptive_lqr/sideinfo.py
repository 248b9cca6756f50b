"""Side information sets: prior structural knowledge about the true parameter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RANK_TOL, null_space, rank

ORTHONORMAL_TOL = 1e-10


@dataclass(frozen=True)
class AffineSubspace:
    """``base + span(basis)`` in the space of p x q matrices; ``basis`` is
    orthonormal under the trace inner product ``<X, Y> = tr(X' Y)``."""

    base: np.ndarray
    basis: tuple

    def __post_init__(self):
        base = np.array(self.base, dtype=float)
        basis = tuple(np.array(e, dtype=float) for e in self.basis)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)
        if basis:
            gram = self.basis_matrix() @ self.basis_matrix().T
            if np.abs(gram - np.eye(len(basis))).max() > ORTHONORMAL_TOL:
                raise ValueError("basis is not trace-orthonormal")

    @classmethod
    def spanned_by(cls, base, directions, tol: float = RANK_TOL) -> "AffineSubspace":
        """Orthonormalize arbitrary (possibly dependent) direction matrices."""
        base = np.asarray(base, dtype=float)
        if len(directions) == 0:
            return cls(base, ())
        flat = np.array([np.asarray(d, dtype=float).ravel() for d in directions])
        u, s, vt = np.linalg.svd(flat, full_matrices=False)
        k = 0 if s[0] == 0.0 else int(np.sum(s > tol * s[0]))
        return cls(base, tuple(v.reshape(base.shape) for v in vt[:k]))

    @classmethod
    def from_constraints(cls, base, constraints) -> "AffineSubspace":
        """``{base + X : tr(X' C_i) = 0 for every constraint C_i}``."""
        base = np.asarray(base, dtype=float)
        if len(constraints) == 0:
            free = np.eye(base.size)
        else:
            flat = np.array([np.asarray(c, dtype=float).ravel() for c in constraints])
            free = null_space(flat).T
        return cls(base, tuple(v.reshape(base.shape) for v in free))

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def basis_matrix(self) -> np.ndarray:
        """Rows are the flattened basis elements."""
        if not self.basis:
            return np.zeros((0, self.base.size))
        return np.array([e.ravel() for e in self.basis])

    def point(self, coefficients) -> np.ndarray:
        out = self.base.copy()
        for c, e in zip(coefficients, self.basis):
            out = out + c * e
        return out

    def project(self, theta) -> np.ndarray:
        """Frobenius-orthogonal projection onto the affine subspace."""
        theta = np.asarray(theta, dtype=float)
        coef = self.basis_matrix() @ (theta - self.base).ravel()
        return self.point(coef)

    def distance(self, theta) -> float:
        return float(np.linalg.norm(np.asarray(theta) - self.project(theta), 2))

    def contains(self, theta, tol: float = 1e-10) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.abs(theta - self.project(theta)).max() <= tol * (1.0 + np.abs(theta).max()))


@dataclass(frozen=True)
class SideInformation:
    """A constraint set for the dynamics parameter.

    kinds: ``support`` (boolean mask, entries outside are zero), ``subspace``
    (an :class:`AffineSubspace`), ``sparsity`` (at most ``budget`` nonzeros),
    ``rank`` (rank at most ``budget``).
    """

    kind: str
    mask: np.ndarray | None = None
    subspace: AffineSubspace | None = None
    budget: int | None = None

    @classmethod
    def support(cls, mask) -> "SideInformation":
        return cls("support", mask=np.array(mask, dtype=bool))

    @classmethod
    def full(cls, p: int, q: int) -> "SideInformation":
        return cls.support(np.ones((p, q), dtype=bool))

    @classmethod
    def affine(cls, subspace: AffineSubspace) -> "SideInformation":
        return cls("subspace", subspace=subspace)

    @classmethod
    def sparsity(cls, budget: int) -> "SideInformation":
        return cls("sparsity", budget=int(budget))

    @classmethod
    def rank_budget(cls, budget: int) -> "SideInformation":
        return cls("rank", budget=int(budget))

    def __post_init__(self):
        if self.kind not in ("support", "subspace", "sparsity", "rank"):
            raise ValueError(f"unknown side information kind {self.kind!r}")
        if self.kind == "support" and self.mask is None:
            raise ValueError("support side information needs a mask")
        if self.kind == "subspace" and self.subspace is None:
            raise ValueError("subspace side information needs an AffineSubspace")
        if self.kind in ("sparsity", "rank") and (self.budget is None or self.budget < 0):
            raise ValueError("budget must be a nonnegative integer")

    @property
    def samplable(self) -> bool:
        return self.kind in ("support", "subspace")

    def contains(self, theta, tol: float = 1e-10) -> bool:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "support":
            return bool(np.all(np.abs(theta[~self.mask]) <= tol))
        if self.kind == "subspace":
            return self.subspace.contains(theta, tol)
        if self.kind == "sparsity":
            return int(np.sum(np.abs(theta) > tol)) <= self.budget
        return rank(theta) <= self.budget

    def as_subspace(self, shape) -> AffineSubspace:
        """The linear (affine) set as an AffineSubspace; support sets pass through the origin."""
        if self.kind == "subspace":
            return self.subspace
        if self.kind == "support":
            idx = np.flatnonzero(self.mask.ravel())
            basis = []
            for i in idx:
                e = np.zeros(int(np.prod(shape)))
                e[i] = 1.0
                basis.append(e.reshape(shape))
            return AffineSubspace(np.zeros(shape), tuple(basis))
        raise NotImplementedError(f"{self.kind} sets are not affine")
