"""Differential-privacy toolbox.

Mechanism calibrations (Gaussian, Laplace), budget splitting by simple and
advanced composition, symmetric noise matrices, the binary-tree mechanism
for continual release of prefix sums, and high-probability norm bounds for
the injected noise.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidBudget, OutOfRange, PureDpUnsupported

REGIMES = ("none", "jdp", "ldp")
DISTS = ("gaussian", "laplace")

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) pair; ``delta == 0`` means pure DP."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        eps, delta = float(self.epsilon), float(self.delta)
        if not (eps > 0.0) or not math.isfinite(eps):
            raise InvalidBudget(f"epsilon must be a positive finite number, got {self.epsilon!r}")
        if not (0.0 <= delta < 1.0):
            raise InvalidBudget(f"delta must lie in [0, 1), got {self.delta!r}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)

    @property
    def is_pure(self):
        return self.delta == 0.0

    def require_approx(self):
        """Check the range accepted by approximate-DP calibrations.

        Epsilon may equal 1; several calibrations are quoted at epsilon = 1.
        """
        if self.delta == 0.0:
            raise PureDpUnsupported("this calibration needs delta > 0; use the Laplace path for pure DP")
        if not (0.0 < self.epsilon <= 1.0):
            raise InvalidBudget(f"epsilon must lie in (0, 1], got {self.epsilon}")
        return self


def _budget(b):
    if isinstance(b, PrivacyBudget):
        return b
    eps, delta = b
    return PrivacyBudget(eps, delta)


def gaussian_sigma(sensitivity, budget):
    """Noise standard deviation of the Gaussian mechanism.

    ``sigma = sensitivity * sqrt(2 ln(2/delta)) / epsilon`` for an l2
    sensitivity.
    """
    try:
        b = _budget(budget).require_approx()
    except PureDpUnsupported as exc:
        raise InvalidBudget(str(exc)) from None
    if sensitivity < 0:
        raise ValueError("sensitivity must be non-negative")
    if sensitivity == 0:
        return 0.0
    return sensitivity * math.sqrt(2.0 * math.log(2.0 / b.delta)) / b.epsilon


def laplace_scale(sensitivity_l1, epsilon):
    """Scale ``b = sensitivity_l1 / epsilon`` of the Laplace mechanism."""
    if not (epsilon > 0) or not math.isfinite(epsilon):
        raise InvalidBudget(f"epsilon must be positive, got {epsilon!r}")
    if sensitivity_l1 < 0:
        raise ValueError("sensitivity must be non-negative")
    return sensitivity_l1 / epsilon


def advanced_composition_split(budget, k):
    """Per-mechanism budget so that k adaptive uses compose to ``budget``.

    Returns ``(epsilon / sqrt(8 k ln(2/delta)), delta / (2k))``.
    """
    b = _budget(budget)
    if b.is_pure:
        raise PureDpUnsupported("advanced composition only yields approximate DP")
    b.require_approx()
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")
    eps = b.epsilon / math.sqrt(8.0 * k * math.log(2.0 / b.delta))
    return PrivacyBudget(eps, b.delta / (2.0 * k))


def simple_composition_split(budget, k):
    """Per-mechanism budget ``(epsilon / k, delta / k)`` for k-fold composition."""
    b = _budget(budget)
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")
    return PrivacyBudget(b.epsilon / k, b.delta / k)


def compose_splits(budget, steps):
    """Apply a chain of ``("simple" | "advanced", k)`` splits in order."""
    b = _budget(budget)
    for kind, k in steps:
        if kind == "simple":
            b = simple_composition_split(b, k)
        elif kind == "advanced":
            b = advanced_composition_split(b, k)
        else:
            raise ValueError(f"unknown composition kind {kind!r}")
    return b


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def make_rng(seed):
    """A Generator from an int, a sequence of ints, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_symmetric_gaussian(d, sigma, seed):
    """``(Z + Z^T) / sqrt(2)`` with ``Z`` having i.i.d. N(0, sigma^2) entries.

    Off-diagonal entries keep variance sigma^2; the diagonal has 2 sigma^2.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if sigma == 0:
        return np.zeros((d, d))
    z = sigma * make_rng(seed).standard_normal((d, d))
    return (z + z.T) / _SQRT2


def sample_symmetric_laplace(d, scale, seed):
    """Symmetric matrix whose upper triangle (with diagonal) is i.i.d. Laplace(scale)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    if scale == 0:
        return np.zeros((d, d))
    z = make_rng(seed).laplace(0.0, scale, (d, d))
    upper = np.triu(z)
    return upper + np.triu(z, 1).T


def sample_vector(d, scale, seed, dist="gaussian"):
    if scale == 0:
        return np.zeros(d)
    rng = make_rng(seed)
    if dist == "gaussian":
        return scale * rng.standard_normal(d)
    if dist == "laplace":
        return rng.laplace(0.0, scale, d)
    raise ValueError(f"unknown distribution {dist!r}")


def sample_matrix(d, scale, seed, dist="gaussian"):
    if dist == "gaussian":
        return sample_symmetric_gaussian(d, scale, seed)
    if dist == "laplace":
        return sample_symmetric_laplace(d, scale, seed)
    raise ValueError(f"unknown distribution {dist!r}")


# ---------------------------------------------------------------------------
# tree-based aggregation
# ---------------------------------------------------------------------------


def tree_levels(n):
    """Number of levels ``ceil(log2 n) + 1`` of a complete tree with n leaves."""
    if n < 1:
        raise ValueError("a tree needs at least one leaf")
    return (int(n) - 1).bit_length() + 1


def dyadic_nodes(k):
    """Nodes ``(level, index)`` whose blocks tile the leaves ``[1, k]``.

    Node ``(j, i)`` covers leaves ``i * 2**j + 1 .. (i + 1) * 2**j``. The
    decomposition follows the binary expansion of k, largest block first.
    """
    k = int(k)
    nodes = []
    start = 0
    for level in range(k.bit_length() - 1, -1, -1):
        if (k >> level) & 1:
            nodes.append((level, start >> level))
            start += 1 << level
    return nodes


class NoiseTree:
    """Noise half of the binary mechanism over ``num_leaves`` releases.

    Each node carries one noise payload (a symmetric matrix or a vector)
    that is a deterministic function of ``(key, level, index)``, so a prefix
    can be recomputed at any time and always yields the same value. Only
    the nodes of the most recent query are kept in memory.

    Args:
        num_leaves: number of prefix sums the tree can release.
        dim: payload dimension d.
        payload: ``"matrix"`` or ``"vector"``.
        scale: Gaussian standard deviation or Laplace scale per entry.
        key: sequence of ints identifying the tree (run seed, role, stage).
        dist: ``"gaussian"`` or ``"laplace"``.
    """

    def __init__(self, num_leaves, dim, payload="matrix", scale=1.0, key=(0,), dist="gaussian"):
        if num_leaves < 1:
            raise ValueError("num_leaves must be positive")
        if payload not in ("matrix", "vector"):
            raise ValueError(f"unknown payload kind {payload!r}")
        if dist not in DISTS:
            raise ValueError(f"unknown distribution {dist!r}")
        self.num_leaves = int(num_leaves)
        self.levels = tree_levels(self.num_leaves)
        self.dim = int(dim)
        self.payload = payload
        self.scale = float(scale)
        self.key = tuple(int(x) for x in key)
        self.dist = dist
        self._cache = {}

    def node_payload(self, level, index):
        node = (level, index)
        if node in self._cache:
            return self._cache[node]
        rng = np.random.default_rng(self.key + (level, index))
        if self.payload == "matrix":
            value = sample_matrix(self.dim, self.scale, rng, self.dist)
        else:
            value = sample_vector(self.dim, self.scale, rng, self.dist)
        self._cache[node] = value
        return value

    def nodes_for_prefix(self, k):
        if not (1 <= k <= self.num_leaves):
            raise OutOfRange(f"prefix {k} outside [1, {self.num_leaves}]")
        return dyadic_nodes(k)

    def prefix_noise(self, k):
        """Sum of the node payloads covering leaves ``[1, k]``."""
        nodes = self.nodes_for_prefix(k)
        shape = (self.dim, self.dim) if self.payload == "matrix" else (self.dim,)
        total = np.zeros(shape)
        used = {}
        for node in nodes:
            value = self.node_payload(*node)
            used[node] = value
            total += value
        self._cache = used
        return total


def tree_prefix_noise(tree, k):
    """Prefix noise of ``tree`` for leaves ``[1, k]``."""
    return tree.prefix_noise(k)


# ---------------------------------------------------------------------------
# concentration bounds
# ---------------------------------------------------------------------------


def _check_alpha(alpha):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")


def gauss_matrix_eigen_bound(d, sigma, count, alpha):
    """Operator-norm bound for a sum of ``count`` symmetric Gaussian matrices.

    ``sigma * sqrt(count) * (4 sqrt(d) + 2 ln(1/alpha))``; exceeded with
    probability at most alpha.
    """
    _check_alpha(alpha)
    return sigma * math.sqrt(count) * (4.0 * math.sqrt(d) + 2.0 * math.log(1.0 / alpha))


def gauss_vector_bound(d, sigma, count, alpha):
    """l2 bound ``sigma * sqrt(count) * (sqrt(d) + 2 sqrt(ln(1/alpha)))``."""
    _check_alpha(alpha)
    return sigma * math.sqrt(count) * (math.sqrt(d) + 2.0 * math.sqrt(math.log(1.0 / alpha)))


def laplace_matrix_eigen_bound(d, sigma, count, alpha):
    """``sigma * sqrt(count) * (2d + 2 sqrt(d ln(d/alpha)) + ln(d/alpha))``."""
    _check_alpha(alpha)
    ell = math.log(d / alpha)
    return sigma * math.sqrt(count) * (2.0 * d + 2.0 * math.sqrt(d * ell) + ell)


def laplace_vector_bound(d, sigma, count, alpha):
    """``sigma * sqrt(count) * sqrt(d) * ln(d/alpha)``."""
    _check_alpha(alpha)
    return sigma * math.sqrt(count) * math.sqrt(d) * math.log(d / alpha)


def matrix_eigen_bound(dist, d, sigma, count, alpha):
    if dist == "gaussian":
        return gauss_matrix_eigen_bound(d, sigma, count, alpha)
    return laplace_matrix_eigen_bound(d, sigma, count, alpha)


def vector_bound(dist, d, sigma, count, alpha):
    if dist == "gaussian":
        return gauss_vector_bound(d, sigma, count, alpha)
    return laplace_vector_bound(d, sigma, count, alpha)


# ---------------------------------------------------------------------------
# noise profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseProfile:
    """Perturbation regime of one regression stack.

    ``sigma_matrix``, ``sigma_vector`` and ``shift`` hold the calibrated
    values; the values actually injected are those times ``scale_override``
    (see the ``effective_*`` properties). Keeping both makes any override
    visible in every output.
    """

    regime: str = "none"
    dist: str = "gaussian"
    sigma_matrix: float = 0.0
    sigma_vector: float = 0.0
    shift: float = 0.0
    scale_override: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.dist not in DISTS:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if not (self.scale_override > 0) or not math.isfinite(self.scale_override):
            raise ValueError("scale_override must be a positive finite number")
        for name in ("sigma_matrix", "sigma_vector", "shift"):
            value = getattr(self, name)
            if value < 0 or not math.isfinite(value):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.regime == "none" and (self.sigma_matrix or self.sigma_vector or self.shift):
            raise ValueError("regime 'none' carries no noise")

    @property
    def is_private(self):
        return self.regime != "none"

    @property
    def effective_sigma_matrix(self):
        return self.sigma_matrix * self.scale_override

    @property
    def effective_sigma_vector(self):
        return self.sigma_vector * self.scale_override

    @property
    def effective_shift(self):
        return self.shift * self.scale_override

    def to_dict(self):
        out = asdict(self)
        out["effective_sigma_matrix"] = self.effective_sigma_matrix
        out["effective_sigma_vector"] = self.effective_sigma_vector
        out["effective_shift"] = self.effective_shift
        return out
