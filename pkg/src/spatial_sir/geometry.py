"""Domain geometry, contact kernel, population density and interaction weights.

Two different constants are both conventionally written ``a`` in this model:
the decay rate of the density envelope ``exp(-a |x|^delta)`` (``envelope_a``
below) and the edge scale of the hypercube partition,
``r sin(alpha) / (1 + sin(alpha))`` (``edge_a``).  They are never mixed.

Spatial integrals use the midpoint rule on one global lattice of cell centres
``(k + 1/2) h``.  Every quadrature in the package (normalizers, weight
matrices, limit fields, truncation discrepancies) draws its nodes from this
lattice, so grids for nested truncation radii are nested.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.special import betainc, gammaln

from .errors import ConfigurationError, ParameterError, SingularNormalizerError

NU_FLOOR = 1e-12
COMPARTMENTS = ("S", "I", "R")


def ball_volume(d, radius=1.0):
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)) * radius**d


def _as_points(x, d):
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    if pts.ndim == 1:
        if d == 1 and pts.shape[0] != 1:
            pts = pts[:, None]
        else:
            pts = pts[None, :]
    if pts.shape[-1] != d:
        raise ConfigurationError(f"point dimension {pts.shape[-1]} does not match domain dimension {d}")
    return pts


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Full space or the half-space ``{x_1 >= 0}`` in dimension ``dim``.

    ``cone_angle`` and ``cone_radius`` describe the interior cone condition;
    ``ladder`` holds the truncation radii ``M_1 < M_2 < ...``.
    """

    dim: int
    shape: str = "full"
    cone_angle: float = math.pi / 4
    cone_radius: float = 0.5
    ladder: tuple = ()

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigurationError("dimension must be a positive integer")
        if self.shape not in ("full", "half"):
            raise ConfigurationError(f"unknown domain shape {self.shape!r}")
        if not 0.0 < self.cone_angle < math.pi:
            raise ConfigurationError("cone angle must lie in (0, pi)")
        if self.cone_angle >= math.pi / 2:
            raise ConfigurationError("cone angle must be below pi/2 so that truncated balls keep the cone condition")
        if self.shape == "half" and self.cone_angle >= math.pi / 4:
            raise ConfigurationError("half-space domains need a cone angle below pi/4")
        if self.cone_radius <= 0:
            raise ConfigurationError("cone radius must be positive")
        ladder = tuple(float(m) for m in self.ladder)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigurationError("truncation radii must be strictly increasing")
        object.__setattr__(self, "ladder", ladder)

    def contains(self, x):
        pts = _as_points(x, self.dim)
        if self.shape == "full":
            return np.ones(len(pts), dtype=bool)
        return pts[:, 0] >= 0.0

    def direction(self, y):
        """Axis ``l_y`` of the interior cone at each point of ``y``.

        The axis points towards the origin, so cone balls stay inside every
        truncated ball ``B(0, M)`` with ``M`` above ``min_truncation``.  In the
        half-space, points closer than ``cone_radius`` to the boundary get an
        axis tilted by 45 degrees into the domain.
        """
        pts = _as_points(y, self.dim)
        norms = np.linalg.norm(pts, axis=1)
        out = np.zeros_like(pts)
        out[:, 0] = 1.0
        nz = norms > 0
        out[nz] = -pts[nz] / norms[nz, None]
        if self.shape == "half":
            near = pts[:, 0] < self.cone_radius
            for k in np.flatnonzero(near):
                t = pts[k].copy()
                t[0] = 0.0
                tn = np.linalg.norm(t)
                v = np.zeros(self.dim)
                if tn > 0:
                    v = -t / tn
                    v[0] = 1.0
                    v /= np.linalg.norm(v)
                else:
                    v[0] = 1.0
                out[k] = v
        return out

    @property
    def min_truncation(self):
        """Smallest radius ``M`` for which ``D cap B(0, M)`` keeps the cone condition."""
        alpha = self.cone_angle + (math.pi / 4 if self.shape == "half" else 0.0)
        return max(self.cone_radius, self.cone_radius / (2.0 * math.cos(min(alpha, math.pi / 2 - 1e-9))))

    def in_cone_ball(self, y, z):
        """Whether each point of ``z`` lies in ``C(y, l_y, alpha) cap B(y, r)``."""
        y = _as_points(y, self.dim)[0]
        z = _as_points(z, self.dim)
        l = self.direction(y)[0]
        diff = z - y
        dist = np.linalg.norm(diff, axis=1)
        inside = dist <= self.cone_radius * (1 + 1e-12)
        cosang = np.ones_like(dist)
        nz = dist > 0
        cosang[nz] = diff[nz] @ l / dist[nz]
        return inside & (cosang >= math.cos(self.cone_angle) - 1e-12)

    @property
    def cone_ball_volume(self):
        """Lebesgue measure ``m`` of a cone ball."""
        d, a, r = self.dim, self.cone_angle, self.cone_radius
        if d == 1:
            return r
        frac = 0.5 * betainc(0.5 * (d - 1), 0.5, math.sin(a) ** 2)
        if a > math.pi / 2:
            frac = 1.0 - frac
        return frac * ball_volume(d, r)

    def sample_cone_ball(self, y, n, rng):
        """Rejection sample ``n`` points uniform in the cone ball at ``y``."""
        y = _as_points(y, self.dim)[0]
        out = []
        got = 0
        while got < n:
            z = y + self.cone_radius * rng.uniform(-1, 1, size=(4 * n + 8, self.dim))
            z = z[self.in_cone_ball(y, z)]
            out.append(z)
            got += len(z)
        return np.concatenate(out)[:n]

    def cone_condition_holds(self, y, rng, M=None, n=256):
        """Monte Carlo check that the cone ball at ``y`` lies in ``D`` (or ``D cap B(0, M)``)."""
        z = self.sample_cone_ball(y, n, rng)
        ok = self.contains(z)
        if M is not None:
            ok &= np.linalg.norm(z, axis=1) <= M * (1 + 1e-12)
        return bool(ok.all())


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic contact kernel ``K(x, y) = k(|x - y|)``.

    ``indicator``: ``C`` on ``|x - y| <= support``.
    ``tent``: ``C (1 - |x - y| / support)`` clipped at zero.
    ``r`` and ``c_low`` give the lower bound ``K >= c_low`` on ``|x - y| <= r``.
    """

    family: str
    C: float
    support: float
    r: float
    c_low: float

    def __post_init__(self):
        if self.family not in ("indicator", "tent"):
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if not (self.C > 0 and self.support > 0 and self.r > 0 and self.c_low > 0):
            raise ConfigurationError("kernel constants C, support, r, c_low must be positive")
        if self.r > self.support or (self.family == "tent" and self.r >= self.support):
            raise ConfigurationError("kernel lower-bound radius r must lie below the support radius")
        if self.c_low > self.profile(np.array([self.r]))[0] * (1 + 1e-12):
            raise ConfigurationError("kernel floor c_low exceeds the kernel value at radius r")

    def profile(self, dist):
        dist = np.asarray(dist, dtype=float)
        if self.family == "indicator":
            return np.where(dist <= self.support, self.C, 0.0)
        return self.C * np.clip(1.0 - dist / self.support, 0.0, None)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1:] != y.shape[-1:]:
            raise ConfigurationError(f"dimension mismatch between points {x.shape} and {y.shape}")
        return self.profile(np.linalg.norm(x - y, axis=-1))


def kernel_eval(spec, x, y):
    """Scalar ``K(x, y)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ConfigurationError(f"dimension mismatch between points {x.shape} and {y.shape}")
    return float(spec(x, y))


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompartmentLaw:
    """Position law of one initial compartment.

    ``expower``: density proportional to ``exp(-a |x|^delta)`` on the domain.
    ``uniform``: uniform on the cube ``[-half_width, half_width]^d`` cut to the domain.
    """

    family: str = "expower"
    a: float = 1.0
    delta: float = 2.0
    half_width: float = 1.0

    def __post_init__(self):
        if self.family not in ("expower", "uniform"):
            raise ConfigurationError(f"unknown density family {self.family!r}")
        if self.family == "expower" and not (self.a > 0 and self.delta > 0):
            raise ConfigurationError("expower density needs a > 0 and delta > 0")
        if self.family == "uniform" and not self.half_width > 0:
            raise ConfigurationError("uniform density needs a positive half width")

    def normalizer(self, domain):
        d = domain.dim
        half = 0.5 if domain.shape == "half" else 1.0
        if self.family == "uniform":
            return half * (2.0 * self.half_width) ** d
        # surface area of S^{d-1} times int_0^inf r^{d-1} exp(-a r^delta) dr
        log_area = math.log(2.0) + 0.5 * d * math.log(math.pi) - gammaln(0.5 * d)
        log_radial = gammaln(d / self.delta) - math.log(self.delta) - (d / self.delta) * math.log(self.a)
        return half * math.exp(log_area + log_radial)

    def pdf(self, x, domain):
        pts = _as_points(x, domain.dim)
        z = self.normalizer(domain)
        inside = domain.contains(pts)
        if self.family == "uniform":
            inside &= np.all(np.abs(pts) <= self.half_width, axis=1)
            return np.where(inside, 1.0 / z, 0.0)
        r = np.linalg.norm(pts, axis=1)
        return np.where(inside, np.exp(-self.a * r**self.delta) / z, 0.0)

    def sample(self, n, domain, rng):
        d = domain.dim
        if self.family == "uniform":
            pts = rng.uniform(-self.half_width, self.half_width, size=(n, d))
        else:
            # a R^delta ~ Gamma(d / delta)
            radius = (rng.gamma(d / self.delta, size=n) / self.a) ** (1.0 / self.delta)
            g = rng.standard_normal(size=(n, d))
            g /= np.linalg.norm(g, axis=1)[:, None]
            pts = radius[:, None] * g
        if domain.shape == "half":
            pts[:, 0] = np.abs(pts[:, 0])
        return pts


@dataclass(frozen=True)
class BaselineDensity:
    """Limiting population density and its initial S/I/R decomposition."""

    domain: DomainSpec
    fractions: tuple
    laws: tuple

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or len(self.laws) != 3:
            raise ConfigurationError("need three compartment fractions and three compartment laws")
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-12:
            raise ConfigurationError("compartment fractions must be non-negative and sum to 1")
        object.__setattr__(self, "fractions", fr)

    def _active(self):
        return [(f, law) for f, law in zip(self.fractions, self.laws) if f > 0]

    def compartment_pdf(self, c, x):
        return self.laws[c].pdf(x, self.domain)

    def __call__(self, x):
        pts = _as_points(x, self.domain.dim)
        out = np.zeros(len(pts))
        for f, law in self._active():
            out += f * law.pdf(pts, self.domain)
        return out

    def shares(self, x):
        """Initial shares ``(S(0,x), I(0,x), R(0,x))``; zero rows where the density vanishes."""
        pts = _as_points(x, self.domain.dim)
        parts = np.stack([f * law.pdf(pts, self.domain) for f, law in zip(self.fractions, self.laws)], axis=1)
        total = parts.sum(axis=1)
        out = np.zeros_like(parts)
        pos = total > 0
        out[pos] = parts[pos] / total[pos, None]
        return out

    @cached_property
    def envelope(self):
        """``(a, delta, c0, C0)`` of the exponential-power envelope, or ``None``.

        ``None`` flags a density outside the envelope class (uniform pieces or
        mixed exponents); such densities are accepted for oracle tests only.
        """
        active = self._active()
        if any(law.family != "expower" for _, law in active):
            return None
        deltas = {law.delta for _, law in active}
        if len(deltas) != 1:
            return None
        delta = deltas.pop()
        a = min(law.a for _, law in active)
        z = [(f, law, law.normalizer(self.domain)) for f, law in active]
        c0 = sum(f / zz for f, law, zz in z if law.a == a)
        C0 = sum(f / zz for f, law, zz in z)
        return a, delta, c0, C0

    @property
    def envelope_ok(self):
        return self.envelope is not None

    def support_radius(self):
        """Radius of a ball containing the support, ``inf`` for unbounded laws."""
        active = self._active()
        if all(law.family == "uniform" for _, law in active):
            return max(law.half_width for _, law in active) * math.sqrt(self.domain.dim)
        return math.inf

    def sample(self, N, rng_for):
        """I.i.d. states and positions; ``rng_for(c)`` gives the stream of compartment ``c``."""
        states = rng_for(-1).choice(3, size=N, p=np.asarray(self.fractions))
        pos = np.zeros((N, self.domain.dim))
        for c in range(3):
            idx = np.flatnonzero(states == c)
            if len(idx):
                pos[idx] = self.laws[c].sample(len(idx), self.domain, rng_for(c))
        return states.astype(np.int8), pos


# ---------------------------------------------------------------------------
# Lattice quadrature
# ---------------------------------------------------------------------------


def lattice_nodes(domain, h, center, radius, M=None):
    """Cell centres ``(k + 1/2) h`` in ``B(center, radius) cap D (cap B(0, M))``."""
    d = domain.dim
    center = np.asarray(center, dtype=float).reshape(d)
    lo = np.floor((center - radius) / h - 0.5).astype(int)
    hi = np.ceil((center + radius) / h - 0.5).astype(int)
    if domain.shape == "half":
        lo[0] = max(lo[0], 0)
    axes = [np.arange(lo[k], hi[k] + 1) for k in range(d)]
    if any(len(ax) == 0 for ax in axes):
        return np.zeros((0, d))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    nodes = (mesh + 0.5) * h
    keep = np.linalg.norm(nodes - center, axis=1) <= radius
    if M is not None:
        keep &= np.linalg.norm(nodes, axis=1) <= M
    return nodes[keep]


@dataclass
class Grid:
    """Midpoint-rule nodes of ``D cap B(0, M)`` on the global lattice."""

    nodes: np.ndarray
    h: float
    M: float

    @classmethod
    def build(cls, domain, h, M):
        return cls(lattice_nodes(domain, h, np.zeros(domain.dim), M), float(h), float(M))

    @property
    def cell_volume(self):
        return self.h ** self.nodes.shape[1]

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def tree(self):
        return cKDTree(self.nodes)

    def subset(self, M):
        """Indices of the nodes in ``B(0, M)``."""
        return np.flatnonzero(np.linalg.norm(self.nodes, axis=1) <= M)


def kernel_matrix(kernel, xs, ys, tree_y=None):
    """Sparse ``K(x_i, y_j)`` restricted to pairs within the kernel support."""
    tx = cKDTree(xs)
    ty = tree_y if tree_y is not None else cKDTree(ys)
    hits = tx.query_ball_tree(ty, kernel.support)
    rows = np.repeat(np.arange(len(xs)), [len(hh) for hh in hits])
    cols = np.fromiter(itertools.chain.from_iterable(hits), dtype=np.int64, count=len(rows))
    vals = kernel.profile(np.linalg.norm(xs[rows] - ys[cols], axis=1))
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(xs), len(ys)))
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


# ---------------------------------------------------------------------------
# Interaction weights
# ---------------------------------------------------------------------------


def check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ParameterError("γ must lie in [0,1)")


class SpatialModel:
    """Bundle of domain, kernel and density with lattice spacing ``h``.

    Provides the normalizer ``nu(y) = int K(z, y) mu(z) dz`` (over ``D`` or
    ``D_n``) and the weights ``Lambda``, ``Lambda_n`` and ``Omega``.
    """

    def __init__(self, domain, kernel, density, h):
        if density.domain != domain:
            raise ConfigurationError("density is defined on a different domain")
        if h <= 0:
            raise ParameterError("quadrature spacing must be positive")
        self.domain = domain
        self.kernel = kernel
        self.density = density
        self.h = float(h)

    @property
    def dim(self):
        return self.domain.dim

    def normalizer(self, y, M=None):
        y = _as_points(y, self.dim)[0]
        z = lattice_nodes(self.domain, self.h, y, self.kernel.support, M)
        nu = float(np.sum(self.kernel(z, y) * self.density(z)) * self.h**self.dim) if len(z) else 0.0
        if nu < NU_FLOOR:
            raise SingularNormalizerError(f"normalizer {nu:.3e} at y={y} is below the floor {NU_FLOOR:g}")
        return nu

    def lambda_weight(self, gamma, x, y, M=None):
        check_gamma(gamma)
        x = _as_points(x, self.dim)[0]
        y = _as_points(y, self.dim)[0]
        num = float(self.kernel(x, y)) * float(self.density(y)[0])
        if gamma == 0.0:
            return num
        return num / self.normalizer(y, M) ** gamma

    def omega_weight(self, gamma, x, y, M=None):
        check_gamma(gamma)
        x = _as_points(x, self.dim)[0]
        y = _as_points(y, self.dim)[0]
        num = float(self.kernel(x, y)) * float(self.density(x)[0])
        if gamma == 0.0:
            return num
        return num / self.normalizer(y, M) ** gamma

    def grid(self, M):
        return Grid.build(self.domain, self.h, M)

    def grid_normalizers(self, grid, targets=None, M=None):
        """``nu`` at ``grid.nodes[targets]`` integrating over grid nodes in ``B(0, M)``.

        Exact for targets whose kernel ball lies inside the grid radius.
        """
        targets = np.arange(len(grid)) if targets is None else np.asarray(targets)
        src = np.arange(len(grid)) if M is None else grid.subset(M)
        K = kernel_matrix(self.kernel, grid.nodes[targets], grid.nodes[src])
        mu = self.density(grid.nodes[src])
        return K @ mu * grid.cell_volume

    def weight_matrix(self, gamma, grid, M=None):
        """Sparse ``Lambda_n(x_i, y_j) h^d`` on a grid over ``D_n``.

        The normalizer integrates over the grid itself, i.e. over ``D_n`` with
        ``M = grid.M`` unless another radius is given.
        """
        check_gamma(gamma)
        K = kernel_matrix(self.kernel, grid.nodes, grid.nodes, grid.tree)
        mu = self.density(grid.nodes)
        col = mu * grid.cell_volume
        if gamma > 0.0:
            nu = self.grid_normalizers(grid, M=M)
            bad = (mu > 0) & (nu < NU_FLOOR)
            if bad.any():
                raise SingularNormalizerError(f"{int(bad.sum())} grid normalizers fall below {NU_FLOOR:g}")
            scale = np.zeros_like(nu)
            scale[mu > 0] = nu[mu > 0] ** (-gamma)
            col = col * scale
        return (K @ sparse.diags(col)).tocsr()

    def operator_sums(self, gamma, M_check):
        """Numerical ``sup_x int Lambda(x,y) dy`` and ``sup_y int Omega(x,y) dx`` on ``B(0, M_check)``.

        The outer grid reaches ``M_check + 2 support`` so that every normalizer
        used is the untruncated one.
        """
        check_gamma(gamma)
        R = self.kernel.support
        g = Grid.build(self.domain, self.h, M_check + 2 * R)
        inner = g.subset(M_check + R)
        core = g.subset(M_check)
        mu = self.density(g.nodes)
        nu = self.grid_normalizers(g, targets=inner)
        pos = nu > 0
        inv = np.zeros_like(nu)
        inv[pos] = nu[pos] ** (-gamma)
        K = kernel_matrix(self.kernel, g.nodes[core], g.nodes[inner])
        vol = g.cell_volume
        # Lambda(x, y) = K mu(y) nu(y)^-gamma, integrated over y
        lam = K @ (mu[inner] * inv) * vol
        # Omega(x, y) = K mu(x) nu(y)^-gamma, integrated over x
        core_pos = np.searchsorted(inner, core)
        omega_core = (K @ (mu[inner] * vol)) * inv[core_pos]
        return float(lam.max()), float(omega_core.max())


# ---------------------------------------------------------------------------
# Analytic constants
# ---------------------------------------------------------------------------


def epsilon_for(gamma):
    """Midpoint of the admissible interval for ``gamma (1 + eps) < 1``."""
    return 0.5 * (1.0 / gamma - 1.0) if gamma > 0 else 1.0


def power_split(eps, delta):
    """Coefficients ``(p, C)`` with ``(x + y)^delta <= p x^delta + C y^delta`` for ``x, y >= 0``."""
    if delta <= 1.0:
        return 1.0, 1.0
    theta = (1.0 + eps) ** (1.0 / delta) - 1.0
    return 1.0 + eps, (1.0 + 1.0 / theta) ** delta


def operator_bound_constants(kernel, density, gamma):
    """Explicit bounds on ``sup_x int Lambda dy`` and ``sup_y int Omega dx``.

    Both follow the chain: numerator bounded by ``C C0 exp(-a|.|^delta)`` on the
    kernel ball, normalizer bounded below by ``c_low c0 m exp(-a (|y| + r)^delta)``
    over the cone ball, then the power split of ``(|y| + r)^delta``.  For the
    second bound a separate split of ``(|x| + support)^delta`` with
    ``eps' = (1 - gamma) / (1 + gamma)`` cancels the growing exponential.
    """
    check_gamma(gamma)
    env = density.envelope
    if env is None:
        raise ConfigurationError("operator bounds need an exponential-power envelope density")
    a, delta, c0, C0 = env
    dom = density.domain
    d = dom.dim
    m = dom.cone_ball_volume
    eps = epsilon_for(gamma)
    _, c_eps = power_split(eps, delta)
    base = kernel.C * C0 * math.exp(a * gamma * c_eps * kernel.r**delta) / (kernel.c_low * c0 * m) ** gamma
    vol = ball_volume(d, kernel.support)
    lam_const = base * vol
    if gamma > 0:
        eps2 = (1.0 - gamma) / (1.0 + gamma)
        _, c_eps2 = power_split(eps2, delta)
        p_eps = 1.0 + eps if delta > 1.0 else 1.0
        log_omega = math.log(base * vol) + a * gamma * p_eps * c_eps2 * kernel.support**delta
        # near gamma = 1 the constant exceeds double range; it is then reported as inf
        omega_const = math.exp(log_omega) if log_omega < 709.0 else math.inf
    else:
        omega_const = base * vol
    return float(lam_const), float(omega_const)


# ---------------------------------------------------------------------------
# Hypercube partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionSpec:
    """Partition of space into translates of ``(0, edge]^d``, ``edge = edge_a / sqrt(d)``."""

    domain: DomainSpec

    @property
    def edge_a(self):
        s = math.sin(self.domain.cone_angle)
        return self.domain.cone_radius * s / (1.0 + s)

    @property
    def edge(self):
        return self.edge_a / math.sqrt(self.domain.dim)

    @property
    def cell_volume(self):
        return self.edge ** self.domain.dim

    def _cell_inside(self, lower, M):
        e = self.edge
        d = self.domain.dim
        corners = lower[:, None, :] + e * np.array(list(itertools.product((0.0, 1.0), repeat=d)))[None]
        far = np.linalg.norm(corners, axis=2).max(axis=1)
        ok = far <= M * (1 + 1e-12)
        if self.domain.shape == "half":
            ok &= lower[:, 0] >= -1e-12 * e
        return ok

    def ordered_cells(self, radius):
        """Lower corners of all cells with centre within ``radius``, in partition order."""
        e = self.edge
        d = self.domain.dim
        K = int(math.ceil(radius / e)) + 1
        ax = np.arange(-K, K + 1)
        idx = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        lower = idx * e
        if self.domain.shape == "half":
            keep = idx[:, 0] >= 0
            idx, lower = idx[keep], lower[keep]
        centres = lower + 0.5 * e
        dist = np.linalg.norm(centres, axis=1)
        keep = dist <= radius
        idx, lower, dist = idx[keep], lower[keep], dist[keep]
        order = np.lexsort(tuple(idx[:, k] for k in reversed(range(d))) + (np.round(dist, 12),))
        return idx[order], lower[order]

    def cells(self, M):
        """``(lower_corners, q(M))``: the first ``q(M)`` cells, all inside ``D cap B(0, M)``.

        ``q(M)`` is the index just before the first cell (in partition order)
        that leaves ``B(0, M)``.
        """
        ladder = self.domain.ladder
        threshold = max(ladder[0] if ladder else 0.0, self.edge_a)
        if M < threshold:
            raise ParameterError(f"partition radius {M} below max(M_1, edge constant) = {threshold}")
        idx, lower = self.ordered_cells(M + self.edge * math.sqrt(self.domain.dim))
        inside = self._cell_inside(lower, M)
        out = np.flatnonzero(~inside)
        q = int(out[0]) if len(out) else len(inside)
        if q == 0:
            raise ParameterError(f"no partition cell fits inside the ball of radius {M}")
        return lower[:q], q

    def cell_in_cone(self, y, M):
        """Index ``k <= q(M)`` (1-based) of a cell inside the cone ball at ``y``, or ``None``."""
        dom = self.domain
        y = _as_points(y, dom.dim)[0]
        l = dom.direction(y)[0]
        s = math.sin(dom.cone_angle)
        u = y + dom.cone_radius / (1.0 + s) * l
        e = self.edge
        k = np.ceil(u / e - 1.0).astype(int)
        lower_u = k * e
        lower, q = self.cells(M)
        hit = np.flatnonzero(np.all(np.isclose(lower, lower_u, rtol=0, atol=1e-9 * e), axis=1))
        if not len(hit):
            return None
        corners = lower_u + e * np.array(list(itertools.product((0.0, 1.0), repeat=dom.dim)))
        if not dom.in_cone_ball(y, corners).all():
            return None
        return int(hit[0]) + 1


def partition_cells(part, M):
    return part.cells(M)
