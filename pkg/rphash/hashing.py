"""
Random projection hash family H_{R,a,b} and the threshold filter predicates
"""

from dataclasses import dataclass
from math import comb
from typing import Optional, Tuple

import numpy as np

import config
from .errors import PreconditionError, ZeroVector
from .geometry import UnitTuple
from .utils import keyed_generator


@dataclass(frozen=True)
class HashFamilyParams:
    """
    One draw of H_{R,a,b}: h = a + b Gaussian directions in R^d

    The A-set keeps the a directions with the largest |r_i . v|; the
    complementary B-set holds the b smallest.
    """

    d: int
    a: int
    b: int
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        if self.d < 1 or self.a < 1 or self.b < 1:
            raise PreconditionError(f"need d, a, b >= 1, got d={self.d}, a={self.a}, b={self.b}")

    @property
    def h(self) -> int:
        return self.a + self.b


@dataclass(frozen=True, eq=False)
class HashInstance:
    params: HashFamilyParams
    R: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64)
        if R.shape != (self.params.h, self.params.d):
            raise PreconditionError(
                f"instance needs {self.params.h} vectors of dimension {self.params.d}, got {R.shape}"
            )
        R.setflags(write=False)
        object.__setattr__(self, "R", R)

    @classmethod
    def from_vectors(cls, R: np.ndarray, a: int, seed: int = 0) -> "HashInstance":
        """Instance with explicitly given projection directions"""
        R = np.asarray(R, dtype=np.float64)
        h, d = R.shape
        return cls(HashFamilyParams(d=d, a=a, b=h - a, seed=seed), R)


@dataclass(frozen=True)
class HashValue:
    """Strictly increasing 1-based indices of the retained directions"""

    indices: Tuple[int, ...]

    def __len__(self):
        return len(self.indices)

    def complement(self, h: int) -> "HashValue":
        kept = set(self.indices)
        return HashValue(tuple(i for i in range(1, h + 1) if i not in kept))


def projection_vector(seed: int, index: int, d: int, instance: int = 0) -> np.ndarray:
    """
    Reconstruct r_index of an instance on its own

    Each direction has its own Philox counter range keyed on
    (seed, instance), so r_i never depends on how many others were drawn.
    """
    rng = keyed_generator(seed, config.STREAMS["hash_instance"], instance, counter=index << 128)
    return rng.standard_normal(d)


def sample_instance(
    params: HashFamilyParams,
    rng: Optional[np.random.Generator] = None,
    instance: int = 0,
) -> HashInstance:
    """
    Draw the h Gaussian directions of one hash instance

    Args:
        params: Family parameters (the seed keys the counter-based streams)
        rng: Optional generator; when given, directions come from it instead
        instance: Instance index within the seed's stream

    Returns:
        Immutable HashInstance
    """
    if rng is not None:
        R = rng.standard_normal((params.h, params.d))
    else:
        R = np.stack([projection_vector(params.seed, i, params.d, instance) for i in range(params.h)])
    return HashInstance(params, R)


def _abs_projections(inst: HashInstance, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (inst.params.d,):
        raise PreconditionError(f"expected a vector of dimension {inst.params.d}, got {v.shape}")
    if not np.any(v):
        raise ZeroVector("cannot hash the zero vector")
    # extended precision where the platform has it
    dots = inst.R.astype(np.longdouble) @ v.astype(np.longdouble)
    return np.abs(dots)


def hash_value(inst: HashInstance, v: np.ndarray) -> HashValue:
    """
    Indices of the a largest |r_i . v|, ties going to the smaller index

    Raises:
        ZeroVector: if v is zero
    """
    mags = _abs_projections(inst, v)
    order = np.lexsort((np.arange(mags.size), -mags))
    return HashValue(tuple(sorted(int(i) + 1 for i in order[: inst.params.a])))


def hash_complement(inst: HashInstance, v: np.ndarray) -> HashValue:
    """
    Indices of the b smallest |r_i . v|, ties going to the larger index

    This is exactly the complement of hash_value.
    """
    mags = _abs_projections(inst, v)
    order = np.lexsort((-np.arange(mags.size), mags))
    return HashValue(tuple(sorted(int(i) + 1 for i in order[: inst.params.b])))


def cross_polytope_hash(inst: HashInstance, v: np.ndarray) -> int:
    """
    Signed index of the largest signed projection (+i or -i, 1-based)
    """
    _abs_projections(inst, v)
    dots = inst.R @ np.asarray(v, dtype=np.float64)
    signed = np.concatenate([dots, -dots])
    best = int(np.argmax(signed))  # argmax keeps the first, i.e. least, index
    h = inst.params.h
    return best + 1 if best < h else -(best - h + 1)


def k_collision(inst: HashInstance, tup: UnitTuple) -> bool:
    """True iff every tuple vector receives the same hash value"""
    values = {hash_value(inst, v) for v in tup.vectors}
    return len(values) == 1


def predicate_above(r: np.ndarray, C: float, v: np.ndarray) -> bool:
    """Filter that passes when |v . r| > C"""
    if C <= 0:
        raise PreconditionError(f"threshold must be positive, got {C}")
    return bool(abs(float(np.dot(v, r))) > C)


def predicate_below(r: np.ndarray, c: float, v: np.ndarray) -> bool:
    """Filter that passes when |v . r| < c"""
    if c <= 0:
        raise PreconditionError(f"threshold must be positive, got {c}")
    return bool(abs(float(np.dot(v, r))) < c)


def naive_collision_rate(h: int, a: int, k: int) -> float:
    """C(h,a)^-(k-1), the rate for independent uniform hash values"""
    return float(comb(h, a)) ** (-(k - 1))


def hash_values_batch(R: np.ndarray, V: np.ndarray, a: int) -> np.ndarray:
    """
    Bitmask hash values for stacked instances

    Args:
        R: (n, h, d) directions, one instance per leading index
        V: (n, m, d) vectors to hash against the matching instance
        a: Retained-index count

    Returns:
        (n, m) int64 masks with bit i set when direction i is retained
    """
    h = R.shape[-2]
    if h > config.MAX_BATCH_H:
        raise PreconditionError(f"batched hashing supports h <= {config.MAX_BATCH_H}, got {h}")
    mags = np.abs(np.einsum("nmd,nhd->nmh", V, R))
    # stable sort on -|r.v| keeps the smaller index first among ties
    order = np.argsort(-mags, axis=-1, kind="stable")[..., :a]
    return np.sum(np.left_shift(np.int64(1), order.astype(np.int64)), axis=-1)
