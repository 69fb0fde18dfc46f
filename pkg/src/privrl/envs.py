"""Finite-horizon tabular MDPs, their linear encodings, and exact DP oracles."""

import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("riverswim-like", "random-dense")


@dataclass
class TabularMDP:
    """Time-inhomogeneous MDP with known deterministic rewards.

    Attributes:
        rewards: array (H, S, A) with entries in [0, 1].
        transitions: array (H, S, A, S); each last-axis row sums to 1.
        init_dist: array (S,) of initial-state probabilities.
    """

    rewards: np.ndarray
    transitions: np.ndarray
    init_dist: np.ndarray
    name: str = "mdp"
    _cdf: np.ndarray = field(init=False, repr=False)
    _init_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.init_dist = np.asarray(self.init_dist, dtype=np.float64)
        h, s, a = self.rewards.shape
        if self.transitions.shape != (h, s, a, s):
            raise ValueError(f"transitions shape {self.transitions.shape} != {(h, s, a, s)}")
        if self.init_dist.shape != (s,):
            raise ValueError("init_dist must have one entry per state")
        if np.any(self.rewards < 0) or np.any(self.rewards > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if np.any(self.transitions < 0):
            raise ValueError("transition probabilities must be non-negative")
        if np.max(np.abs(self.transitions.sum(axis=-1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")
        if np.any(self.init_dist < 0) or abs(self.init_dist.sum() - 1.0) > 1e-12:
            raise ValueError("init_dist must be a probability vector")
        self._cdf = np.cumsum(self.transitions, axis=-1)
        self._init_cdf = np.cumsum(self.init_dist)

    @property
    def H(self):
        return self.rewards.shape[0]

    @property
    def S(self):
        return self.rewards.shape[1]

    @property
    def A(self):
        return self.rewards.shape[2]

    def sample_initial(self, rng):
        return _inverse_cdf(self._init_cdf, rng.random())

    def step(self, s, a, h, rng):
        """Sample ``(s', r)`` at 0-based stage h with one uniform draw."""
        nxt = _inverse_cdf(self._cdf[h, s, a], rng.random())
        return nxt, float(self.rewards[h, s, a])


def _inverse_cdf(cdf, u):
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, cdf.shape[0] - 1)


def step(mdp, s, a, h, rng):
    return mdp.step(s, a, h, rng)


def riverswim_mdp(S, A=2, H=5, seed=None):
    """A RiverSwim-style chain.

    Action 0 moves left deterministically; action 1 swims right
    (0.6 right, 0.35 stay, 0.05 left, reflecting at the ends). Further
    actions, if any, behave like action 0. The small reward sits at the
    left bank, the large one at the right bank. ``seed`` is accepted for a
    uniform interface and unused: the chain is deterministic in shape.
    """
    if S < 2 or A < 2:
        raise ValueError("riverswim-like needs S >= 2 and A >= 2")
    p = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            if a == 1:
                if s == S - 1:
                    p[s, a, s] += 0.6
                    p[s, a, s - 1] += 0.4
                else:
                    p[s, a, s + 1] += 0.6
                    p[s, a, s] += 0.35
                    p[s, a, max(s - 1, 0)] += 0.05
            else:
                p[s, a, max(s - 1, 0)] = 1.0
    r = np.zeros((S, A))
    r[0, 0] = 0.05
    r[S - 1, 1] = 1.0
    init = np.zeros(S)
    init[0] = 1.0
    return TabularMDP(
        rewards=np.broadcast_to(r, (H, S, A)).copy(),
        transitions=np.broadcast_to(p, (H, S, A, S)).copy(),
        init_dist=init,
        name=f"riverswim-like(S={S},A={A},H={H})",
    )


def random_dense_mdp(S, A, H, seed=0):
    """Per-stage Dirichlet(1) transitions, U[0, 1] rewards, uniform start."""
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(S), size=(H, S, A))
    p /= p.sum(axis=-1, keepdims=True)
    r = rng.random((H, S, A))
    return TabularMDP(
        rewards=r,
        transitions=p,
        init_dist=np.full(S, 1.0 / S),
        name=f"random-dense(S={S},A={A},H={H},seed={seed})",
    )


def make_env(family, S, A, H, seed=0):
    if family == "riverswim-like":
        return riverswim_mdp(S, A, H, seed)
    if family == "random-dense":
        return random_dense_mdp(S, A, H, seed)
    raise ValueError(f"unknown environment family {family!r}; expected one of {FAMILIES}")


# ---------------------------------------------------------------------------
# exact oracles
# ---------------------------------------------------------------------------


def optimal_values(mdp):
    """Backward induction; returns ``(V, Q)`` with V of shape (H+1, S), V[H] = 0."""
    H, S, A = mdp.rewards.shape
    v = np.zeros((H + 1, S))
    q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h].max(axis=1)
    return v, q


def greedy_policy(q):
    """Argmax over the action axis with ties going to the lowest index."""
    return np.argmax(q, axis=-1)


def policy_value(mdp, policy):
    """Exact value of a deterministic policy given as an (H, S) action table."""
    policy = np.asarray(policy, dtype=np.int64)
    H, S, _ = mdp.rewards.shape
    if policy.shape != (H, S):
        raise ValueError(f"policy must have shape {(H, S)}")
    v = np.zeros((H + 1, S))
    rows = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = policy[h]
        v[h] = mdp.rewards[h, rows, a] + mdp.transitions[h, rows, a] @ v[h + 1]
    return v


# ---------------------------------------------------------------------------
# encodings
# ---------------------------------------------------------------------------


class MixtureEncoding:
    """Linear-mixture view: ``p_h(s'|s,a) = <phi(s'|s,a), w_h>``.

    Coordinate ``(s, a, s')`` lives at index ``(s * A + a) * S + s'``. The
    basis features have magnitude ``rho = 1/sqrt(S)`` so that
    ``||phi_v(s, a)|| <= 1`` whenever v takes values in [0, 1]; the
    parameters carry the compensating factor ``1/rho``.
    """

    def __init__(self, mdp):
        self.S, self.A, self.H = mdp.S, mdp.A, mdp.H
        self.d = self.S * self.S * self.A
        self.rho = 1.0 / math.sqrt(self.S)
        self.weights = mdp.transitions.reshape(self.H, self.d) / self.rho
        self.c_w = self.S * math.sqrt(self.A)

    def index(self, s, a, s_next):
        return (s * self.A + a) * self.S + s_next

    def phi(self, s_next, s, a):
        x = np.zeros(self.d)
        x[self.index(s, a, s_next)] = self.rho
        return x

    def phi_v(self, v, s, a):
        """``sum_{s'} phi(s'|s,a) v(s')``: block (s, a) holds ``rho * v``."""
        x = np.zeros(self.d)
        off = (s * self.A + a) * self.S
        x[off:off + self.S] = self.rho * np.asarray(v, dtype=np.float64)
        return x

    def phi_v_all(self, v):
        """phi_v for every pair, shape (S, A, d)."""
        n_sa = self.S * self.A
        x = np.zeros((n_sa, n_sa, self.S))
        idx = np.arange(n_sa)
        x[idx, idx, :] = self.rho * np.asarray(v, dtype=np.float64)
        return x.reshape(self.S, self.A, self.d)

    def transition_prob(self, h, s, a, s_next):
        return float(self.phi(s_next, s, a) @ self.weights[h])

    def reconstruct(self):
        """Transition tensor rebuilt from the encoding, shape (H, S, A, S)."""
        return (self.rho * self.weights).reshape(self.H, self.S, self.A, self.S)


class LinearEncoding:
    """Linear-MDP view with one-hot features ``phi(s, a) = e_(s,a)``.

    ``theta_h[(s,a)] = r_h(s,a)`` and ``mu_h(s')[(s,a)] = p_h(s'|s,a)``.
    """

    def __init__(self, mdp):
        self.S, self.A, self.H = mdp.S, mdp.A, mdp.H
        self.d = self.S * self.A
        self.features = np.eye(self.d).reshape(self.S, self.A, self.d)
        self.theta = mdp.rewards.reshape(self.H, self.d).copy()
        # mu[h, s', (s, a)]
        self.mu = np.moveaxis(mdp.transitions, -1, 1).reshape(self.H, self.S, self.d).copy()

    def phi(self, s, a):
        return self.features[s, a]

    def reconstruct(self):
        """``p_h(s'|s,a) = phi(s,a)^T mu_h(s')`` for all entries, shape (H, S, A, S)."""
        flat = np.einsum("xd,hsd->hxs", self.features.reshape(self.d, self.d), self.mu)
        return flat.reshape(self.H, self.S, self.A, self.S)
