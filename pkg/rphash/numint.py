"""
Numerical integration of collision probabilities for b=1 and a=1

The min-index family (b=1) collides when one direction is the smallest for
every tuple vector; with lambda the projections of that direction,

    p = h * integral G(lambda)^(h-1) phi_M(lambda) d lambda

where G is the Gaussian mass of the exterior-angle regions at the conjugate
corners and phi_M the N(0, M) density. The max-index family (a=1) uses the
interior mass F of the lambda-box instead. G is evaluated on spheres of
radius rho through the area of an intersection of spherical caps.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence
import warnings

import numba as nb
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammainc, gammainccinv, gammaln
from tqdm import tqdm

import config
from .errors import (
    DegenerateTriangle,
    PreconditionError,
    ToleranceNotMet,
    UnsupportedConfiguration,
)
from .geometry import TupleConfig, _cholesky, sign_vectors
from .utils import stable_sum

TOL = config.TOLERANCES
TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
MAX_INTERIOR_K = 4
FALLBACK_POLAR_NODES = 256
FALLBACK_AZIMUTH_NODES = 512
INNER_CUT = config.RADIAL_CUTOFF  # conditioned coordinates are clipped to [-cut, cut]

_JIT = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")


# ---------------------------------------------------------------------------
# Radial distribution
# ---------------------------------------------------------------------------

def phi_k(k: int, t: float) -> float:
    """
    CDF of the length of a k-dimensional standard Gaussian vector (chi with k dof)

    Args:
        k: Degrees of freedom (>= 1)
        t: Radius (>= 0)

    Returns:
        P(|g| <= t)
    """
    if k < 1:
        raise PreconditionError(f"chi distribution needs k >= 1, got {k}")
    if t < 0:
        raise PreconditionError(f"radius must be non-negative, got {t}")
    if math.isinf(t):
        return 1.0
    return float(gammainc(k / 2.0, t * t / 2.0))


def chi_density(k: int, rho):
    """Chi density rho^(k-1) exp(-rho^2/2) / (2^(k/2-1) Gamma(k/2))"""
    rho = np.asarray(rho, dtype=np.float64)
    log_norm = (k / 2.0 - 1.0) * math.log(2.0) + float(gammaln(k / 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_density = (k - 1) * np.log(rho) - rho * rho / 2.0 - log_norm
    return np.where(rho > 0, np.exp(log_density), 1.0 / math.sqrt(math.pi / 2.0) if k == 1 else 0.0)


def _composite_rule(lo: float, hi: float, panels: int, nodes: int):
    """Composite Gauss-Legendre nodes and weights on [lo, hi]"""
    x, w = leggauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    points = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return points, weights


def radial_normalisation(k: int = 3) -> float:
    """Total mass of the chi-k radial density on [0, RADIAL_CUTOFF]; should be 1"""
    points, weights = _composite_rule(0.0, config.RADIAL_CUTOFF, 4 * config.RADIAL_PANELS, config.RADIAL_NODES)
    return stable_sum(weights * chi_density(k, points))


def truncation_radius(k: int, h: int, tol: float) -> float:
    """
    Half-width T of the outer box so the neglected mass is below tol/10

    Rows of the Cholesky factor have unit length, so the lambda-box of
    half-width T contains the image of the radius-T ball and the neglected
    integrand mass is at most h (1 - Phi_k(T)).
    """
    if tol <= 0:
        raise PreconditionError(f"tolerance must be positive, got {tol}")
    tail = min(0.5, tol / (10.0 * h))
    return float(math.sqrt(2.0 * gammainccinv(k / 2.0, tail)))


# ---------------------------------------------------------------------------
# Spherical trigonometry
# ---------------------------------------------------------------------------

def spherical_angle(aa: float, bb: float, cc: float) -> float:
    """
    Angle opposite side aa of a spherical triangle with sides aa, bb, cc

    Raises:
        DegenerateTriangle: when the sides violate the triangle inequalities
    """
    sides = (aa, bb, cc)
    if any(not 0.0 < s < math.pi for s in sides):
        raise DegenerateTriangle(f"sides must lie in (0, pi), got {sides}")
    if aa >= bb + cc or bb >= aa + cc or cc >= aa + bb or aa + bb + cc >= TWO_PI:
        raise DegenerateTriangle(f"sides {sides} violate the spherical triangle inequalities")
    cos_a = (math.cos(aa) - math.cos(bb) * math.cos(cc)) / (math.sin(bb) * math.sin(cc))
    return math.acos(min(1.0, max(-1.0, cos_a)))


@nb.njit(**_JIT)
def _angle_between(x, y):
    cx = x[1] * y[2] - x[2] * y[1]
    cy = x[2] * y[0] - x[0] * y[2]
    cz = x[0] * y[1] - x[1] * y[0]
    return math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), x[0] * y[0] + x[1] * y[1] + x[2] * y[2])


@nb.njit(**_JIT)
def _vertex_turn(ri, rj, d):
    # angle at a boundary vertex between the directions to both cap centres
    c = (math.cos(d) - math.cos(ri) * math.cos(rj)) / (math.sin(ri) * math.sin(rj))
    return math.acos(min(1.0, max(-1.0, c)))


@nb.njit(**_JIT)
def _tangent_frame(c):
    ax = 0
    if abs(c[1]) < abs(c[ax]):
        ax = 1
    if abs(c[2]) < abs(c[ax]):
        ax = 2
    e1 = np.zeros(3)
    e1[ax] = 1.0
    dot = c[ax]
    for q in range(3):
        e1[q] -= dot * c[q]
    norm = math.sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2)
    for q in range(3):
        e1[q] /= norm
    e2 = np.empty(3)
    e2[0] = c[1] * e1[2] - c[2] * e1[1]
    e2[1] = c[2] * e1[0] - c[0] * e1[2]
    e2[2] = c[0] * e1[1] - c[1] * e1[0]
    return e1, e2


@nb.njit(**_JIT)
def _cap_area_quadrature(centres, radii):
    """Midpoint rule over the smallest cap in polar coordinates around its centre"""
    m = radii.shape[0]
    s = 0
    for i in range(1, m):
        if radii[i] < radii[s]:
            s = i
    c = centres[s]
    e1, e2 = _tangent_frame(c)
    cos_r = np.cos(radii)
    nt = FALLBACK_POLAR_NODES
    nphi = FALLBACK_AZIMUTH_NODES
    dt = radii[s] / nt
    dphi = TWO_PI / nphi
    area = 0.0
    p = np.empty(3)
    for it in range(nt):
        t = (it + 0.5) * dt
        st = math.sin(t)
        ct = math.cos(t)
        hits = 0
        for ip in range(nphi):
            phi = (ip + 0.5) * dphi
            cp = math.cos(phi)
            sp = math.sin(phi)
            for q in range(3):
                p[q] = ct * c[q] + st * (cp * e1[q] + sp * e2[q])
            inside = True
            for j in range(m):
                if j != s and p[0] * centres[j, 0] + p[1] * centres[j, 1] + p[2] * centres[j, 2] < cos_r[j]:
                    inside = False
                    break
            if inside:
                hits += 1
        area += hits * st * dt * dphi
    return area


@nb.njit(**_JIT)
def _cap_area_boundary(centres, radii, tol):
    """
    Gauss-Bonnet walk around the boundary of an intersection of convex caps

    Returns (area, ambiguous). ambiguous is set when the configuration sits
    within tol of a case boundary (tangency, containment, triple point).
    """
    m = radii.shape[0]
    for i in range(m):
        if radii[i] <= 0.0:
            return 0.0, False
    d = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            d[i, j] = _angle_between(centres[i], centres[j])
            d[j, i] = d[i, j]
            gap = d[i, j] - (radii[i] + radii[j])
            if gap >= tol:
                return 0.0, False
            if gap > -tol:
                return 0.0, True

    # drop caps that contain another cap
    active = np.ones(m, dtype=np.bool_)
    for i in range(m):
        for j in range(m):
            if i == j or not active[i] or not active[j]:
                continue
            if d[i, j] < tol and abs(radii[i] - radii[j]) < tol:
                if i < j:
                    active[j] = False
                continue
            slack = radii[j] - (d[i, j] + radii[i])
            if slack >= tol:
                active[j] = False
            elif slack > -tol:
                return 0.0, True

    n_active = 0
    only = 0
    for i in range(m):
        if active[i]:
            n_active += 1
            only = i
    if n_active == 1:
        return TWO_PI * (1.0 - math.cos(radii[only])), False

    cap = 2 * m + 2
    turning = 0.0
    curvature = 0.0
    n_arcs_total = 0
    for i in range(m):
        if not active[i]:
            continue
        e1, e2 = _tangent_frame(centres[i])
        starts = np.empty(cap)
        lens = np.empty(cap)
        ssrc = np.empty(cap, dtype=np.int64)
        esrc = np.empty(cap, dtype=np.int64)
        n_arc = -1
        for j in range(m):
            if j == i or not active[j]:
                continue
            cj = centres[j]
            p1 = e1[0] * cj[0] + e1[1] * cj[1] + e1[2] * cj[2]
            p2 = e2[0] * cj[0] + e2[1] * cj[1] + e2[2] * cj[2]
            kappa = (math.cos(radii[j]) - math.cos(radii[i]) * math.cos(d[i, j])) / (
                math.sin(radii[i]) * math.sin(d[i, j])
            )
            if abs(kappa) >= 1.0:
                return 0.0, True
            beta = math.acos(kappa)
            s = math.atan2(p2, p1) - beta
            L = 2.0 * beta
            if n_arc == -1:
                starts[0] = s
                lens[0] = L
                ssrc[0] = j
                esrc[0] = j
                n_arc = 1
                continue
            ns = np.empty(cap)
            nl = np.empty(cap)
            nss = np.empty(cap, dtype=np.int64)
            nes = np.empty(cap, dtype=np.int64)
            cnt = 0
            for q in range(n_arc):
                a0 = starts[q]
                la = lens[q]
                rel = s - a0
                rel -= TWO_PI * math.floor(rel / TWO_PI)
                over = rel + L - TWO_PI
                if (
                    rel < tol
                    or TWO_PI - rel < tol
                    or abs(rel + L - la) < tol
                    or abs(rel - la) < tol
                    or abs(over) < tol
                    or abs(over - la) < tol
                ):
                    return 0.0, True
                if rel < la:
                    if rel + L < la:
                        ns[cnt] = a0 + rel
                        nl[cnt] = L
                        nss[cnt] = j
                        nes[cnt] = j
                    else:
                        ns[cnt] = a0 + rel
                        nl[cnt] = la - rel
                        nss[cnt] = j
                        nes[cnt] = esrc[q]
                    cnt += 1
                if over > 0.0:
                    ns[cnt] = a0
                    nss[cnt] = ssrc[q]
                    if over < la:
                        nl[cnt] = over
                        nes[cnt] = j
                    else:
                        nl[cnt] = la
                        nes[cnt] = esrc[q]
                    cnt += 1
            for q in range(cnt):
                if nl[q] < tol:
                    return 0.0, True
                starts[q] = ns[q]
                lens[q] = nl[q]
                ssrc[q] = nss[q]
                esrc[q] = nes[q]
            n_arc = cnt
        for q in range(n_arc):
            curvature += math.cos(radii[i]) * lens[q]
            turning += 0.5 * (
                _vertex_turn(radii[i], radii[ssrc[q]], d[i, ssrc[q]])
                + _vertex_turn(radii[i], radii[esrc[q]], d[i, esrc[q]])
            )
            n_arcs_total += 1

    if n_arcs_total == 0:
        return 0.0, False
    area = TWO_PI - turning - curvature
    smallest = TWO_PI
    for i in range(m):
        if active[i]:
            smallest = min(smallest, TWO_PI * (1.0 - math.cos(radii[i])))
    return min(max(area, 0.0), smallest), False


@nb.njit(**_JIT)
def _cap_intersection_area(centres, radii, tol):
    area, ambiguous = _cap_area_boundary(centres, radii, tol)
    if ambiguous:
        return _cap_area_quadrature(centres, radii), True
    return area, False


def cap_intersection_area(centres: np.ndarray, cos_radii: Sequence[float]) -> float:
    """
    Unit-sphere area of the intersection of caps {x : x . c_j >= cos r_j}

    Args:
        centres: (m, 3) cap centres (normalised here)
        cos_radii: Cosines of the angular radii, in [0, 1] so every cap is convex

    Returns:
        Area in steradians
    """
    centres = np.asarray(centres, dtype=np.float64).reshape(-1, 3)
    cos_radii = np.asarray(cos_radii, dtype=np.float64)
    if cos_radii.shape != (centres.shape[0],):
        raise PreconditionError("need one radius per cap centre")
    if np.any(cos_radii < 0.0) or np.any(cos_radii > 1.0):
        raise PreconditionError("cap radii must lie in [0, pi/2]")
    centres = centres / np.linalg.norm(centres, axis=1, keepdims=True)
    radii = np.arccos(cos_radii)
    area, _ = _cap_intersection_area(np.ascontiguousarray(centres), radii, TOL["cap_ambiguity"])
    return float(area)


def _signs_or_default(lambdas: np.ndarray, signs) -> np.ndarray:
    if signs is None:
        return np.where(lambdas < 0.0, -1.0, 1.0)
    signs = np.asarray(signs, dtype=np.float64)
    if signs.shape != lambdas.shape or not np.all(np.abs(signs) == 1.0):
        raise PreconditionError("signs must be a +-1 vector matching lambdas")
    return signs


def _three_frame(config_: TupleConfig) -> np.ndarray:
    if config_.k != 3:
        raise UnsupportedConfiguration(f"exterior masses are implemented for k=3, got k={config_.k}")
    if config_.duplicate:
        raise UnsupportedConfiguration("repeated-vector configurations have no exterior-mass integral")
    return np.ascontiguousarray(_cholesky(config_))


def triple_cap_fraction(config_: TupleConfig, lambdas: Sequence[float], rho: float, signs=None) -> float:
    """
    Fraction of the radius-rho sphere inside the three caps around s_n rho v_n

    The cap radii are arccos(|lambda_n| / rho); signs default to the signs
    of the lambdas.
    """
    frame = _three_frame(config_)
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (3,):
        raise PreconditionError("need three lambdas")
    if rho <= 0 or rho < np.max(np.abs(lam)) * (1.0 - TOL["cap_ambiguity"]):
        raise PreconditionError(f"rho={rho} must be at least max|lambda_n|")
    signs = _signs_or_default(lam, signs)
    centres = frame * signs[:, None]
    cos_radii = np.minimum(np.abs(lam) / rho, 1.0)
    return cap_intersection_area(centres, cos_radii) / FOUR_PI


# ---------------------------------------------------------------------------
# Exterior mass G (k = 3)
# ---------------------------------------------------------------------------

@nb.njit(**_JIT)
def _dot(x, y):
    acc = 0.0
    for q in range(x.shape[0]):
        acc += x[q] * y[q]
    return acc


@nb.njit(**_JIT)
def _region_distance(A, t, tol):
    """
    Distance from the origin to {w : A w >= t} by active-set enumeration

    The minimiser is w = A_S^T y with y >= 0 on the active rows S; each
    candidate S is checked for dual sign and primal feasibility.
    """
    k = t.shape[0]
    if np.max(t) <= 0.0:
        return 0.0
    best = np.inf
    for mask in range(1, 1 << k):
        idx = np.empty(k, dtype=np.int64)
        n = 0
        for q in range(k):
            if (mask >> q) & 1:
                idx[n] = q
                n += 1
        G = np.empty((n, n))
        rhs = np.empty(n)
        for p in range(n):
            rhs[p] = t[idx[p]]
            for q in range(n):
                G[p, q] = _dot(A[idx[p]], A[idx[q]])
        # rows of A are unit vectors, so det(G) is a scale-free rank test
        if np.linalg.det(G) < 1e-14:
            continue
        y = np.linalg.solve(G, rhs)
        if np.min(y) < -tol:
            continue
        w = np.zeros(A.shape[1])
        for p in range(n):
            w += y[p] * A[idx[p]]
        feasible = True
        for q in range(k):
            if _dot(A[q], w) < t[q] - tol * (1.0 + t[q]):
                feasible = False
                break
        if not feasible:
            continue
        dist_sq = _dot(y, rhs)
        if dist_sq < best:
            best = dist_sq
    if best == np.inf:
        return np.max(t)
    return math.sqrt(max(best, 0.0))


def region_distance(config_: TupleConfig, lambdas: Sequence[float], signs=None) -> float:
    """
    Distance from the origin to the region {w : s_n w . v_n >= |lambda_n|}

    This is the lower limit of the radial integral for that sign pattern.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    lower = np.ascontiguousarray(_cholesky(config_))
    if lam.shape != (config_.k,):
        raise PreconditionError(f"need {config_.k} lambdas")
    signs = _signs_or_default(lam, signs)
    return float(_region_distance(lower * signs[:, None], np.abs(lam), TOL["dual_basis"]))


@nb.njit(**_JIT)
def _exterior_pattern(frame, signs, t, u_nodes, u_weights, cutoff, tol):
    """Radial integral of the cap fraction against the chi-3 density, one sign pattern"""
    centres = frame * signs.reshape(-1, 1)
    rho0 = _region_distance(centres, t, tol)
    if rho0 >= cutoff:
        return 0.0, 0
    span = math.sqrt(cutoff - rho0)
    norm = math.sqrt(2.0 / math.pi)
    radii = np.empty(t.shape[0])
    total = 0.0
    fallbacks = 0
    for q in range(u_nodes.shape[0]):
        u = span * u_nodes[q]
        rho = rho0 + u * u
        for n in range(t.shape[0]):
            radii[n] = math.acos(min(1.0, t[n] / rho))
        area, used = _cap_intersection_area(centres, radii, tol)
        if used:
            fallbacks += 1
        density = norm * rho * rho * math.exp(-0.5 * rho * rho)
        # rho = rho0 + u^2
        total += span * u_weights[q] * (area / FOUR_PI) * density * 2.0 * u
    return total, fallbacks


@nb.njit(**_JIT)
def _exterior_mass(frame, patterns, t, u_nodes, u_weights, cutoff, tol):
    total = 0.0
    fallbacks = 0
    for s in range(patterns.shape[0]):
        value, used = _exterior_pattern(frame, patterns[s], t, u_nodes, u_weights, cutoff, tol)
        total += value
        fallbacks += used
    # conjugate patterns c and -c carry equal mass
    return 2.0 * total, fallbacks


@nb.njit(parallel=True, cache=True, nogil=True)
def _exterior_grid(frame, patterns, points, u_nodes, u_weights, cutoff, tol):
    n = points.shape[0]
    out = np.empty(n)
    fallbacks = np.zeros(n, dtype=np.int64)
    for i in nb.prange(n):
        value, used = _exterior_mass(frame, patterns, np.abs(points[i]), u_nodes, u_weights, cutoff, tol)
        out[i] = value
        fallbacks[i] = used
    return out, fallbacks


def _radial_rule(panels: int, nodes: int):
    # nodes on [0, 1]; the kernel scales by sqrt(cutoff - rho0)
    return _composite_rule(0.0, 1.0, panels, nodes)


def _warn_fallbacks(count: int):
    if count:
        warnings.warn(
            f"cap-area quadrature fallback used at {count} radial nodes", RuntimeWarning, stacklevel=3
        )


def exterior_mass_G(
    config_: TupleConfig,
    lambdas: Sequence[float],
    radial_panels: int = config.RADIAL_PANELS,
    radial_nodes: int = config.RADIAL_NODES,
) -> float:
    """
    Gaussian mass of {r : |r . v_n| >= |lambda_n| for n = 1..3}

    Sum over the essentially distinct sign patterns of a radial integral of
    the triple-cap fraction against the chi-3 density.

    Args:
        config_: k=3 positive-definite configuration
        lambdas: Three projections
        radial_panels: Composite panels of the radial rule
        radial_nodes: Gauss-Legendre nodes per panel

    Returns:
        G(lambda) in [0, 1]
    """
    frame = _three_frame(config_)
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (3,) or not np.all(np.isfinite(lam)):
        raise PreconditionError("need three finite lambdas")
    u_nodes, u_weights = _radial_rule(radial_panels, radial_nodes)
    value, fallbacks = _exterior_mass(
        frame,
        np.ascontiguousarray(sign_vectors(3)),
        np.abs(lam),
        u_nodes,
        u_weights,
        config.RADIAL_CUTOFF,
        TOL["cap_ambiguity"],
    )
    _warn_fallbacks(fallbacks)
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Interior mass F (k <= 4)
# ---------------------------------------------------------------------------

@nb.njit(**_JIT)
def _interior_mass(lower, t, x, w):
    """
    P(|x_n| <= t_n for all n) with x = L g, by sequential conditioning

    Nested Gauss-Legendre over g_1..g_{k-1}; the last coordinate is closed form.
    """
    k = t.shape[0]
    for n in range(k):
        if t[n] <= 0.0:
            return 0.0
    rt2 = math.sqrt(2.0)
    if k == 1:
        return math.erf(t[0] / (lower[0, 0] * rt2))
    nodes = x.shape[0]
    inv_sqrt_2pi = 1.0 / math.sqrt(2.0 * math.pi)
    g = np.zeros(k)
    combos = nodes ** (k - 1)
    total = 0.0
    for flat in range(combos):
        rem = flat
        weight = 1.0
        for lvl in range(k - 1):
            j = rem % nodes
            rem //= nodes
            shift = 0.0
            for q in range(lvl):
                shift += lower[lvl, q] * g[q]
            lo = max((-t[lvl] - shift) / lower[lvl, lvl], -INNER_CUT)
            hi = min((t[lvl] - shift) / lower[lvl, lvl], INNER_CUT)
            if hi <= lo:
                weight = 0.0
                break
            half = 0.5 * (hi - lo)
            g[lvl] = lo + half * (1.0 + x[j])
            weight *= half * w[j] * inv_sqrt_2pi * math.exp(-0.5 * g[lvl] * g[lvl])
        if weight == 0.0:
            continue
        shift = 0.0
        last = k - 1
        for q in range(last):
            shift += lower[last, q] * g[q]
        lo = (-t[last] - shift) / lower[last, last]
        hi = (t[last] - shift) / lower[last, last]
        total += weight * 0.5 * (math.erf(hi / rt2) - math.erf(lo / rt2))
    return total


@nb.njit(parallel=True, cache=True, nogil=True)
def _interior_grid(lower, points, x, w):
    n = points.shape[0]
    out = np.empty(n)
    for i in nb.prange(n):
        out[i] = _interior_mass(lower, np.abs(points[i]), x, w)
    return out


def _interior_lower(config_: TupleConfig) -> np.ndarray:
    if config_.duplicate:
        raise UnsupportedConfiguration("repeated-vector configurations have no interior-mass integral")
    if config_.k > MAX_INTERIOR_K:
        raise UnsupportedConfiguration(f"interior masses are implemented for k <= {MAX_INTERIOR_K}, got k={config_.k}")
    return np.ascontiguousarray(_cholesky(config_))


def interior_mass_F(
    config_: TupleConfig,
    lambdas: Sequence[float],
    inner_nodes: int = config.INNER_NODES,
) -> float:
    """
    Gaussian mass of {r : |r . v_n| <= |lambda_n| for every n}

    Args:
        config_: Positive-definite configuration with k <= 4
        lambdas: k projections
        inner_nodes: Gauss-Legendre nodes per conditioned coordinate

    Returns:
        F(lambda) in [0, 1]
    """
    lower = _interior_lower(config_)
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (config_.k,) or not np.all(np.isfinite(lam)):
        raise PreconditionError(f"need {config_.k} finite lambdas")
    x, w = leggauss(inner_nodes)
    value = _interior_mass(lower, np.abs(lam), x, w)
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Collision probability
# ---------------------------------------------------------------------------

MODES = ("min-index", "max-index")


@dataclass(frozen=True)
class QuadratureSpec:
    """Rule sizes and tolerance for collision_prob_numeric"""

    tol: float = TOL["numeric"]
    truncation: Optional[float] = None  # derived from tol when unset
    outer_panels: int = config.OUTER_PANELS
    outer_nodes: int = config.OUTER_NODES
    radial_panels: int = config.RADIAL_PANELS
    radial_nodes: int = config.RADIAL_NODES
    inner_nodes: int = config.INNER_NODES
    max_refinements: int = config.MAX_REFINEMENTS

    def __post_init__(self):
        if self.tol <= 0:
            raise PreconditionError(f"tolerance must be positive, got {self.tol}")
        if min(self.outer_panels, self.outer_nodes, self.radial_panels, self.radial_nodes, self.inner_nodes) < 1:
            raise PreconditionError("quadrature sizes must be positive")

    def radius(self, k: int, h: int) -> float:
        return self.truncation if self.truncation is not None else truncation_radius(k, h, self.tol)


@dataclass(frozen=True)
class MassQuery:
    """A point lambda against a configuration, for either mass"""

    config: TupleConfig
    lambdas: tuple
    mode: str = "exterior"

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        if self.mode not in ("exterior", "interior"):
            raise PreconditionError(f"mode must be 'exterior' or 'interior', got {self.mode!r}")
        if not all(math.isfinite(x) for x in self.lambdas):
            raise PreconditionError("lambdas must be finite")

    def evaluate(self) -> float:
        if self.mode == "exterior":
            return exterior_mass_G(self.config, self.lambdas)
        return interior_mass_F(self.config, self.lambdas)


def check_numeric_support(k: int, a: int, b: int) -> str:
    """
    Pick the integral representation for (a, b, k)

    Returns:
        'max-index' when a=1 and 2 <= k <= 4, else 'min-index' when b=1 and k=3

    Raises:
        UnsupportedConfiguration: when neither applies
    """
    if a == 1 and 2 <= k <= MAX_INTERIOR_K:
        return "max-index"
    if b == 1 and k == 3:
        return "min-index"
    raise UnsupportedConfiguration(
        f"no numerical estimator for a={a}, b={b}, k={k} (need a=1 with k<=4 or b=1 with k=3)"
    )


def _orthant_grid(k: int, T: float, panels: int, nodes: int):
    x, w = _composite_rule(0.0, T, panels, nodes)
    mesh = np.meshgrid(*([x] * k), indexing="ij")
    wmesh = np.meshgrid(*([w] * k), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return np.ascontiguousarray(points), weights


def _folded_density(config_: TupleConfig, points: np.ndarray) -> np.ndarray:
    """N(0, M) density summed over all sign flips of the point"""
    k = config_.k
    inverse = np.linalg.inv(config_.gram)
    delta = math.sqrt(np.linalg.det(config_.gram))
    signs = sign_vectors(k)
    flipped = points[None, :, :] * signs[:, None, :]
    quad = np.einsum("snk,kl,snl->sn", flipped, inverse, flipped)
    density = np.exp(-0.5 * quad) / (delta * (2.0 * math.pi) ** (k / 2.0))
    # eps and -eps give the same quadratic form
    return 2.0 * density.sum(axis=0)


def _collision_integral(config_: TupleConfig, h: int, mode: str, spec: QuadratureSpec, level: int) -> float:
    k = config_.k
    scale = 2 ** level
    points, weights = _orthant_grid(k, spec.radius(k, h), spec.outer_panels * scale, spec.outer_nodes)
    if mode == "min-index":
        u_nodes, u_weights = _radial_rule(spec.radial_panels * scale, spec.radial_nodes)
        masses, fallbacks = _exterior_grid(
            _three_frame(config_),
            np.ascontiguousarray(sign_vectors(3)),
            points,
            u_nodes,
            u_weights,
            config.RADIAL_CUTOFF,
            TOL["cap_ambiguity"],
        )
        _warn_fallbacks(int(fallbacks.sum()))
    else:
        x, w = leggauss(spec.inner_nodes)
        masses = _interior_grid(_interior_lower(config_), points, x, w)
    masses = np.clip(masses, 0.0, 1.0)
    integrand = h * masses ** (h - 1) * _folded_density(config_, points) * weights
    return stable_sum(integrand)


def collision_prob_numeric(
    config_: TupleConfig,
    h: int,
    mode: str,
    spec: Optional[QuadratureSpec] = None,
    progress: bool = False,
) -> float:
    """
    k-way collision probability of the b=1 or a=1 family by quadrature

    Args:
        config_: Tuple configuration
        h: Number of projection directions (>= 2)
        mode: 'min-index' (b=1, k=3, uses G) or 'max-index' (a=1, k<=4, uses F)
        spec: Quadrature sizes and tolerance
        progress: Show a progress bar over refinement levels

    Returns:
        Collision probability

    Raises:
        UnsupportedConfiguration: for (k, mode) without an integral
        ToleranceNotMet: when successive refinements still differ by more than tol
    """
    spec = spec or QuadratureSpec()
    if h < 2:
        raise PreconditionError(f"need h >= 2, got {h}")
    if mode not in MODES:
        raise PreconditionError(f"mode must be one of {MODES}, got {mode!r}")
    k = config_.k
    if config_.duplicate:
        raise UnsupportedConfiguration("repeated-vector configurations collide with probability 1")
    if mode == "min-index" and k != 3:
        raise UnsupportedConfiguration(f"min-index integral needs k=3, got k={k}")
    if mode == "max-index" and not 2 <= k <= MAX_INTERIOR_K:
        raise UnsupportedConfiguration(f"max-index integral needs 2 <= k <= {MAX_INTERIOR_K}, got k={k}")
    _cholesky(config_)

    previous = _collision_integral(config_, h, mode, spec, 0)
    change = math.inf
    levels = range(1, spec.max_refinements + 1)
    for level in tqdm(levels, desc=f"Refining {mode}", disable=not progress):
        current = _collision_integral(config_, h, mode, spec, level)
        change = abs(current - previous)
        if change <= spec.tol:
            return float(min(max(current, 0.0), 1.0))
        previous = current
    raise ToleranceNotMet(
        f"{mode} quadrature did not reach tol={spec.tol} after {spec.max_refinements} "
        f"refinements (last change {change:.3g})"
    )
