"""Complex 2x2 matrix algebra.

All matrices are plain ``numpy`` arrays of shape ``(2, 2)`` and dtype
``complex128``; :func:`cmatrix` validates and coerces input.  Everything here
is a pure function of its arguments.
"""

from __future__ import annotations

import cmath
import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SingularMatrix, ZeroBase

DEFAULT_TOL = 1e-8

I2 = np.eye(2, dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


class MatrixKind(str, enum.Enum):
    DIAGONALIZABLE = "Diagonalizable"
    JORDAN = "JordanBlock"
    SCALAR = "Scalar"


class NearDefectiveWarning(RuntimeWarning):
    """Eigenvalue gap is within 100*tol; eigenvectors are ill-conditioned."""


def cmatrix(entries) -> np.ndarray:
    """Return ``entries`` as a finite complex 2x2 array (always a copy)."""
    a = np.array(entries, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def norm(a: np.ndarray) -> float:
    """Max-abs entry norm, used for all tolerance comparisons."""
    return float(np.max(np.abs(a)))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True)
class LogBranch:
    """Branch of log t: ``Log|t| + i(Arg t + 2 pi k)`` with ``Arg`` taken in
    ``(ref - pi, ref + pi]``.
    """

    k: int = 0
    ref: float = 0.0

    def arg(self, t: complex) -> float:
        theta = cmath.phase(t)
        # shift into (ref - pi, ref + pi]
        shift = math.ceil((theta - self.ref - math.pi) / (2 * math.pi))
        theta -= 2 * math.pi * shift
        return theta + 2 * math.pi * self.k

    def log(self, t: complex) -> complex:
        if t == 0:
            raise ZeroBase("log of zero")
        return complex(math.log(abs(t)), self.arg(t))

    def power(self, t: complex, exponent: complex) -> complex:
        return cmath.exp(exponent * self.log(t))


PRINCIPAL = LogBranch()


@dataclass(frozen=True)
class Eigensystem2:
    eigenvalues: tuple[complex, complex]
    kind: MatrixKind
    eigenvectors: np.ndarray | None = None
    jordan_basis: np.ndarray | None = None
    condition: float = 1.0
    near_defective: bool = False


def _eigenvalues(tr: complex, det: complex) -> tuple[complex, complex, complex]:
    disc = tr * tr - 4 * det
    sq = cmath.sqrt(disc)
    r1, r2 = (tr + sq) / 2, (tr - sq) / 2
    big, other = (r1, r2) if abs(r1) >= abs(r2) else (r2, r1)
    # smaller root from det avoids cancellation; near underflow det / big
    # can overflow, and there is no cancellation to avoid anyway
    small = complex(det) / big if abs(big) > 1e-150 else other
    lam = sorted((big, small), key=lambda z: (-z.real, -z.imag))
    return lam[0], lam[1], disc


def _null_vector(a: np.ndarray, lam: complex) -> np.ndarray:
    va = np.array([a[0, 1], lam - a[0, 0]])
    vb = np.array([lam - a[1, 1], a[1, 0]])
    v = va if np.linalg.norm(va) >= np.linalg.norm(vb) else vb
    n = np.linalg.norm(v)
    if n == 0:
        return np.array([1.0 + 0j, 0.0])
    return v / n


def eig2(a, tol: float = DEFAULT_TOL) -> Eigensystem2:
    """Eigen-decomposition of a 2x2 matrix with kind classification.

    Tolerances are relative to ``max(1, norm(a))``.  The scalar test comes
    first because scalar matrices also have zero discriminant.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = cmatrix(a)
    scale = max(1.0, norm(a))
    tr = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    l1, l2, disc = _eigenvalues(tr, det)
    half = tr / 2
    nil = a - half * I2
    if norm(nil) <= tol * scale:
        return Eigensystem2((half, half), MatrixKind.SCALAR, eigenvectors=I2.copy(), jordan_basis=I2.copy())
    if abs(disc) <= (tol * scale) ** 2:
        j = int(np.argmax([np.linalg.norm(nil[:, 0]), np.linalg.norm(nil[:, 1])]))
        v2 = np.zeros(2, dtype=complex)
        v2[j] = 1.0
        p = np.column_stack([nil @ v2, v2])
        return Eigensystem2((half, half), MatrixKind.JORDAN, jordan_basis=p, condition=float(np.linalg.cond(p)))
    v = np.column_stack([_null_vector(a, l1), _null_vector(a, l2)])
    cond = float(np.linalg.cond(v))
    near = abs(l1 - l2) < 100 * tol * scale
    if near:
        warnings.warn(f"near-defective matrix, eigenvector condition {cond:.3g}", NearDefectiveWarning, stacklevel=2)
    return Eigensystem2((l1, l2), MatrixKind.DIAGONALIZABLE, eigenvectors=v, condition=cond, near_defective=near)


def _sinhc(d: complex) -> complex:
    if abs(d) < 1e-3:
        d2 = d * d
        return 1 + d2 / 6 * (1 + d2 / 20 * (1 + d2 / 42))
    return cmath.sinh(d) / d


def expm2(x) -> np.ndarray:
    """exp of a 2x2 matrix via exp(mI + Y) = e^m (cosh d I + sinh(d)/d Y),
    Y traceless, d^2 = -det Y.  Exact for every kind, including defective."""
    x = np.asarray(x, dtype=complex)
    m = (x[0, 0] + x[1, 1]) / 2
    y = x - m * I2
    d = cmath.sqrt(y[0, 0] * y[0, 0] + y[0, 1] * y[1, 0])
    return cmath.exp(m) * (cmath.cosh(d) * I2 + _sinhc(d) * y)


def mat_power(a, t: complex, branch: LogBranch = PRINCIPAL) -> np.ndarray:
    """t**A = exp(A log t) on ``branch``."""
    if t == 0:
        raise ZeroBase("t**A undefined at t = 0")
    return expm2(np.asarray(a, dtype=complex) * branch.log(complex(t)))


def classify_product(m, tol: float = DEFAULT_TOL) -> MatrixKind:
    """Kind of an (invertible) monodromy product: general vs degenerate case."""
    m = cmatrix(m)
    if abs(np.linalg.det(m)) <= tol:
        raise SingularMatrix(f"|det| = {abs(np.linalg.det(m)):.3g} <= {tol:g}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearDefectiveWarning)
        return eig2(m, tol).kind


# --- serialization: complex as [re, im], matrices row-major nested ----------

def to_pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def from_pair(p: Sequence[float] | complex | float) -> complex:
    if isinstance(p, (int, float, complex)):
        return complex(p)
    if len(p) != 2:
        raise ValueError(f"complex scalar must be [re, im], got {p!r}")
    return complex(float(p[0]), float(p[1]))


def matrix_to_nested(a) -> list[list[list[float]]]:
    a = np.asarray(a)
    return [[to_pair(a[i, j]) for j in range(a.shape[1])] for i in range(a.shape[0])]


def matrix_from_nested(rows) -> np.ndarray:
    return cmatrix([[from_pair(x) for x in row] for row in rows])
