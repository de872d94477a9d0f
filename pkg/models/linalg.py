# models/linalg.py
from dataclasses import dataclass

import numpy as np

from exceptions import BadDim, NotPositiveDefinite

PD_TOL = 1e-10
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Hermitian positive definite spatial covariance with trace M.

    Construct through :meth:`from_array` for user data; the constructor
    itself only validates.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise BadDim(f"correlation matrix must be square, got shape {entries.shape}")
        if entries.shape[0] < 2:
            raise BadDim(f"correlation matrix needs M >= 2, got M = {entries.shape[0]}")
        if not np.array_equal(entries, entries.conj().T):
            raise NotPositiveDefinite("correlation matrix is not exactly Hermitian")
        values = np.linalg.eigvalsh(entries)
        if values[0] <= PD_TOL * max(values[-1], 0.0):
            raise NotPositiveDefinite(
                f"smallest eigenvalue {values[0]:.3e} is below {PD_TOL:g} x largest"
            )
        if abs(np.trace(entries).real - entries.shape[0]) > 1e-12 * entries.shape[0]:
            raise BadDim(f"correlation matrix trace {np.trace(entries).real:.12g} differs from M = {entries.shape[0]}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_array(cls, array, renormalize: bool = True) -> "CorrelationMatrix":
        """Symmetrize a nearly Hermitian array and rescale it to trace M."""
        array = np.asarray(array, dtype=complex)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise BadDim(f"correlation matrix must be square, got shape {array.shape}")
        scale = max(1.0, float(np.max(np.abs(array))))
        if np.max(np.abs(array - array.conj().T)) > HERMITIAN_TOL * scale:
            raise NotPositiveDefinite("input is not Hermitian")
        array = 0.5 * (array + array.conj().T)
        if renormalize:
            trace = np.trace(array).real
            if trace <= 0:
                raise NotPositiveDefinite("trace must be positive")
            array = array * (array.shape[0] / trace)
            # rescaling can leave the diagonal a few ulps off; pin it exactly
            np.fill_diagonal(array, array.diagonal().real)
            array = _fix_trace(array)
        return cls(array)


def _fix_trace(array: np.ndarray) -> np.ndarray:
    m = array.shape[0]
    drift = np.trace(array).real - m
    if drift:
        array = array.copy()
        array[np.diag_indices(m)] -= drift / m
    return array


@dataclass(frozen=True, eq=False)
class EigPair:
    """Eigenvalues sorted descending with matching unit-norm columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def u_max(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def u_min(self) -> np.ndarray:
        return self.vectors[:, -1]

    @property
    def lambda_max(self) -> float:
        return float(self.values[0])

    @property
    def lambda_min(self) -> float:
        return float(self.values[-1])
