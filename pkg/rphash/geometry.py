"""
Geometry of k-tuples of unit vectors: Gram matrices, dual bases, polar sine,
squared shortest dual diagonal, reducibility and tuple construction
"""

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

import config
from .errors import CholeskyFail, Degenerate, NotUnit, PreconditionError

TOL = config.TOLERANCES


@dataclass(frozen=True, eq=False)
class UnitTuple:
    """
    A k-tuple of unit vectors in R^d, stored as the rows of a (k, d) array

    Linear independence is checked where it matters (gram_matrix,
    dual_basis) so that repeated-vector tuples can still be hashed.
    """

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise PreconditionError(f"expected a (k, d) array, got shape {vectors.shape}")
        k, d = vectors.shape
        if k < 1 or k > d:
            raise PreconditionError(f"tuple size k={k} must satisfy 1 <= k <= d={d}")
        norms = np.linalg.norm(vectors, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > TOL["unit_norm"]:
            raise NotUnit(f"vector norm deviates from 1 by {worst:.3e}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class TupleConfig:
    """
    Configuration of a k-tuple: the Gram matrix of pairwise dot products

    For k=3 the off-diagonals (M_23, M_13, M_12) are the (mu_1, mu_2, mu_3)
    of the integral formulation; from_pairwise uses the (alpha, beta, gamma)
    naming of the sweeps with alpha = M_12, beta = M_13, gamma = M_23.
    """

    gram: np.ndarray
    duplicate: bool = field(default=False, compare=False)
    singular: bool = field(default=False, compare=False)  # PSD allowed, Monte-Carlo only

    def __post_init__(self):
        gram = np.array(self.gram, dtype=np.float64)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1] or gram.shape[0] < 1:
            raise PreconditionError(f"Gram matrix must be square, got shape {gram.shape}")
        if not np.allclose(gram, gram.T, atol=TOL["symmetry"], rtol=0.0):
            raise Degenerate("Gram matrix is not symmetric")
        if not np.allclose(np.diag(gram), 1.0, atol=TOL["unit_norm"], rtol=0.0):
            raise NotUnit("Gram matrix must have unit diagonal")
        gram = 0.5 * (gram + gram.T)
        if self.duplicate or self.singular:
            if not is_positive_semidefinite(gram):
                raise Degenerate("Gram matrix is not positive semidefinite")
        elif not is_positive_definite(gram):
            raise Degenerate(
                f"Gram matrix is not positive definite (det={np.linalg.det(gram):.3e})"
            )
        gram.setflags(write=False)
        object.__setattr__(self, "gram", gram)

    def __eq__(self, other):
        if not isinstance(other, TupleConfig):
            return NotImplemented
        return self.duplicate == other.duplicate and np.array_equal(self.gram, other.gram)

    def __hash__(self):
        return hash((self.duplicate, self.gram.tobytes()))

    @property
    def k(self) -> int:
        return self.gram.shape[0]

    @property
    def sigma(self) -> float:
        """Sum of the 2*C(k,2) ordered pairwise products"""
        upper = self.gram[np.triu_indices(self.k, 1)]
        return 2.0 * float(np.sum(upper))

    def upper(self) -> List[float]:
        """Strict upper triangle, row-major"""
        return [float(x) for x in self.gram[np.triu_indices(self.k, 1)]]

    @classmethod
    def from_upper(cls, k: int, flat: Sequence[float], singular: bool = False) -> "TupleConfig":
        """Build from the row-major strict upper triangle"""
        flat = list(flat)
        if len(flat) != k * (k - 1) // 2:
            raise PreconditionError(
                f"k={k} needs {k * (k - 1) // 2} upper-triangle entries, got {len(flat)}"
            )
        gram = np.eye(k)
        rows, cols = np.triu_indices(k, 1)
        gram[rows, cols] = flat
        gram[cols, rows] = flat
        return cls(gram, singular=singular)

    @classmethod
    def uniform(cls, k: int, c: float) -> "TupleConfig":
        """All pairwise dot products equal to c"""
        return cls(np.full((k, k), c) + (1.0 - c) * np.eye(k))

    @classmethod
    def from_pairwise(cls, alpha: float, beta: float, gamma: float, singular: bool = False) -> "TupleConfig":
        """Triple with v1.v2 = alpha, v1.v3 = beta, v2.v3 = gamma"""
        return cls.from_upper(3, [alpha, beta, gamma], singular=singular)

    @classmethod
    def duplicate_of(cls, k: int) -> "TupleConfig":
        """Repeated-vector mode: k copies of one vector (Monte-Carlo only)"""
        return cls(np.ones((k, k)), duplicate=True)

    def to_json(self) -> str:
        return json.dumps(
            {"k": self.k, "gram": self.upper(), "duplicate": self.duplicate, "singular": self.singular}
        )

    @classmethod
    def from_json(cls, text: str) -> "TupleConfig":
        payload = json.loads(text)
        if payload.get("duplicate"):
            return cls.duplicate_of(int(payload["k"]))
        return cls.from_upper(int(payload["k"]), payload["gram"], singular=bool(payload.get("singular")))


@dataclass(frozen=True)
class ConfigFunctionals:
    alpha: float
    delta: float
    best_signs: tuple
    dmin_sq: float


class Reducibility(NamedTuple):
    best_signs: tuple
    dmin_sq: float
    is_reducible: bool


def is_positive_definite(gram: np.ndarray) -> bool:
    """Non-raising positive-definiteness check used by sweeps"""
    gram = np.asarray(gram, dtype=np.float64)
    if np.linalg.det(gram) <= TOL["gram_det"]:
        return False
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return False
    return True


def is_positive_semidefinite(gram: np.ndarray) -> bool:
    """Smallest eigenvalue no lower than -gram_det"""
    return bool(np.linalg.eigvalsh(np.asarray(gram, dtype=np.float64))[0] >= -TOL["gram_det"])


@lru_cache(maxsize=None)
def sign_vectors(k: int) -> np.ndarray:
    """
    The 2^(k-1) essentially distinct sign vectors (first entry fixed to +1)

    Args:
        k: Tuple size

    Returns:
        Read-only (2^(k-1), k) array of +-1
    """
    if k > config.MAX_SIGN_ENUMERATION_K:
        raise PreconditionError(f"sign enumeration is exact only for k <= {config.MAX_SIGN_ENUMERATION_K}")
    count = 1 << (k - 1)
    bits = (np.arange(count)[:, None] >> np.arange(k - 1)[None, :]) & 1
    signs = np.ones((count, k))
    signs[:, 1:] = 1.0 - 2.0 * bits
    signs.setflags(write=False)
    return signs


def _gram_of(vectors: np.ndarray) -> np.ndarray:
    return vectors @ vectors.T


def gram_matrix(tup: UnitTuple) -> TupleConfig:
    """
    Gram matrix of a unit tuple

    Args:
        tup: Unit tuple

    Returns:
        TupleConfig with M_ij = v_i . v_j

    Raises:
        Degenerate: if det(M) <= 1e-12
    """
    gram = _gram_of(tup.vectors)
    np.fill_diagonal(gram, 1.0)
    if np.linalg.det(gram) <= TOL["gram_det"]:
        raise Degenerate("tuple vectors are linearly dependent")
    return TupleConfig(gram)


def _checked_inverse(config_: TupleConfig) -> np.ndarray:
    if config_.duplicate or np.linalg.det(config_.gram) <= TOL["gram_det"]:
        raise Degenerate("Gram matrix is not invertible")
    return np.linalg.inv(config_.gram)


def squared_shortest_dual_diagonal(config_: TupleConfig) -> float:
    """
    alpha = min over sign vectors eps of eps^T M^-1 eps

    For k=2 this is 4/(4 - tau^2) = 2/(1 + |c|).
    """
    inverse = _checked_inverse(config_)
    signs = sign_vectors(config_.k)
    values = np.einsum("si,ij,sj->s", signs, inverse, signs)
    return float(np.min(values))


def polar_sine(config_: TupleConfig) -> float:
    """Volume of the parallelepiped spanned by the unit vectors, sqrt(det M)"""
    return float(np.sqrt(max(np.linalg.det(config_.gram), 0.0)))


def dual_basis(vectors: Union[UnitTuple, np.ndarray]) -> np.ndarray:
    """
    Dual basis u_1..u_k in span(V) with v_i . u_j = delta_ij

    Accepts any linearly independent rows (not only unit vectors), so the
    dual of a dual basis can be taken.

    Returns:
        (k, d) array of dual vectors
    """
    rows = vectors.vectors if isinstance(vectors, UnitTuple) else np.asarray(vectors, dtype=np.float64)
    gram = _gram_of(rows)
    scale = np.sqrt(np.outer(np.diag(gram), np.diag(gram)))
    if np.linalg.det(gram / scale) <= TOL["gram_det"]:
        raise Degenerate("vectors are linearly dependent")
    return np.linalg.solve(gram, rows)


def signed_sum_norms(vectors: np.ndarray) -> np.ndarray:
    """
    Squared norms of every essentially distinct +-1 combination, batched

    Args:
        vectors: (..., k, d) stack of tuples

    Returns:
        (..., 2^(k-1)) array of |sum_n eps_n v_n|^2
    """
    signs = sign_vectors(vectors.shape[-2])
    combos = np.einsum("si,...id->...sd", signs, vectors)
    return np.einsum("...sd,...sd->...s", combos, combos)


def reducible_mask(vectors: np.ndarray) -> np.ndarray:
    """True for every tuple in a (m, k, d) stack with a +-1 combination shorter than 1"""
    return signed_sum_norms(vectors).min(axis=-1) < 1.0 - TOL["reducible"]


def reducibility(config_: TupleConfig) -> Reducibility:
    """
    Shortest +-1 combination of the tuple (generalised cosine rule)

    dmin_sq = min over eps of eps^T M eps; the tuple is reducible when that
    combination is strictly shorter than the unit vectors.
    """
    signs = sign_vectors(config_.k)
    values = np.einsum("si,ij,sj->s", signs, config_.gram, signs)
    best = int(np.argmin(values))
    dmin_sq = float(values[best])
    return Reducibility(
        best_signs=tuple(int(s) for s in signs[best]),
        dmin_sq=dmin_sq,
        is_reducible=dmin_sq < 1.0 - TOL["reducible"],
    )


def config_functionals(config_: TupleConfig) -> ConfigFunctionals:
    """alpha, delta and the shortest +-1 combination in one pass"""
    verdict = reducibility(config_)
    return ConfigFunctionals(
        alpha=squared_shortest_dual_diagonal(config_),
        delta=polar_sine(config_),
        best_signs=verdict.best_signs,
        dmin_sq=verdict.dmin_sq,
    )


def _cholesky(config_: TupleConfig) -> np.ndarray:
    try:
        return np.linalg.cholesky(config_.gram)
    except np.linalg.LinAlgError as e:
        raise CholeskyFail(f"Cholesky factorisation failed: {e}") from e


def sampling_factor(config_: TupleConfig) -> np.ndarray:
    """
    Factor F with F F^T = M used to place tuples in a random frame

    Cholesky for positive-definite configurations; an eigen factor with
    rows rescaled to unit length when the configuration is only
    semidefinite (repeated or coplanar vectors).
    """
    if not (config_.duplicate or config_.singular):
        return _cholesky(config_)
    values, vectors = np.linalg.eigh(config_.gram)
    factor = vectors * np.sqrt(np.clip(values, 0.0, None))[None, :]
    return factor / np.linalg.norm(factor, axis=1, keepdims=True)


def _orthonormal_frames(gaussian: np.ndarray) -> tuple:
    """Gram-Schmidt frames of stacked (n, d, k) Gaussian matrices"""
    q, r = np.linalg.qr(gaussian)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    # sign fix makes the frame Haar distributed
    signs = np.where(diag < 0.0, -1.0, 1.0)
    ok = np.min(np.abs(diag), axis=-1) > TOL["frame_rank"]
    return q * signs[..., None, :], ok


def make_tuples(config_: TupleConfig, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Batched tuple constructor: n random tuples with Gram matrix exactly M

    Each tuple is an orthonormal frame from Gram-Schmidt of k Gaussian
    d-vectors, multiplied by sampling_factor(M).

    Args:
        config_: Target configuration
        d: Ambient dimension (d >= k)
        n: Number of tuples
        rng: numpy Generator

    Returns:
        (n, k, d) array; rows of each slice are the tuple vectors
    """
    k = config_.k
    if d < k:
        raise PreconditionError(f"dimension d={d} is smaller than tuple size k={k}")
    if config_.duplicate:
        base = rng.standard_normal((n, d))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
        return np.repeat(base[:, None, :], k, axis=1)
    lower = sampling_factor(config_)
    frames, ok = _orthonormal_frames(rng.standard_normal((n, d, k)))
    while not np.all(ok):
        bad = np.flatnonzero(~ok)
        redraw, ok_bad = _orthonormal_frames(rng.standard_normal((bad.size, d, k)))
        frames[bad] = redraw
        ok[bad] = ok_bad
    # v_i = sum_j L_ij q_j
    return np.einsum("ij,ndj->nid", lower, frames)


def make_tuple(config_: TupleConfig, d: int, rng: Optional[np.random.Generator] = None) -> UnitTuple:
    """
    Random tuple, uniform over orientations, with Gram matrix exactly M

    Raises:
        PreconditionError: if d < k
        CholeskyFail: if M is not numerically positive definite
    """
    rng = rng if rng is not None else np.random.default_rng()
    vectors = make_tuples(config_, d, 1, rng)[0]
    return UnitTuple(vectors)
