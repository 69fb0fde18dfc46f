"""Batched least-squares value iteration (LSVI-UCB) with joint DP.

The server refreshes its estimates only at statically scheduled batch
boundaries, so the privacy mechanisms release at most B outputs per stage:
the design matrix through a B-leaf noise tree and the response vector with
a fresh noise vector per batch, both drawn up front from the run seed.
"""

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _accel
from .agent_mixture import ROLE_TREE, EpisodeLog, ceil_tol, tree_depth
from .envs import LinearEncoding, greedy_policy
from .errors import InvalidBudget, NotPositiveDefinite, PureDpUnsupported
from .linalg_core import inv_norms_factored, cholesky_factor, operator_norm, psd_solve
from .privacy import (
    NoiseTree,
    PrivacyBudget,
    gauss_matrix_eigen_bound,
    gauss_vector_bound,
    laplace_matrix_eigen_bound,
    laplace_scale,
    laplace_vector_bound,
    make_rng,
    sample_vector,
)

VARIANTS = ("approx_jdp", "pure_jdp", "non_batched")
ROLE_ETA = 3


@dataclass(frozen=True)
class LsviParams:
    """Derived parameters of batched LSVI-UCB.

    ``sigma_lambda``, ``sigma_u``, ``upsilon``, ``c_k`` and ``c_j`` are the
    values at ``scale_override``; ``U_K``, ``chi`` and ``beta`` are derived
    from them.
    """

    K: int
    H: int
    d: int
    epsilon: float
    delta: float
    p: float
    variant: str
    regime: str
    dist: str
    lam: float
    B: int
    B0: int
    batch_len: int
    sigma_lambda: float
    sigma_u: float
    upsilon: float
    c_k: float
    c_j: float
    U_K: float
    chi: float
    beta: float
    scale_override: float = 1.0

    @property
    def batch_starts(self):
        """1-based first episodes ``k_i = i * ceil(K/B) + 1`` for ``0 <= i < B``."""
        return [i * self.batch_len + 1 for i in range(self.B)]

    @property
    def update_episodes(self):
        """Episodes after which a new batch output is computed (``k_{i} - 1``)."""
        return [k - 1 for k in self.batch_starts[1:] if k - 1 <= self.K]

    @property
    def shift(self):
        return self.c_k + self.upsilon

    def scaled(self, scale_override):
        """Same schedule with every noise quantity multiplied by ``scale_override``."""
        if not (scale_override > 0):
            raise ValueError("scale_override must be positive")
        s = scale_override / self.scale_override
        return _finish(replace(self, scale_override=scale_override, sigma_lambda=self.sigma_lambda * s,
                               sigma_u=self.sigma_u * s, upsilon=self.upsilon * s, c_j=self.c_j * s))

    def to_dict(self):
        out = asdict(self)
        out["batch_starts"] = self.batch_starts
        out["shift"] = self.shift
        return out


def _finish(par):
    lam = par.lam
    c_k = par.d * par.upsilon
    denom = lam + c_k
    u_k = max(1.0, 2 * par.H * math.sqrt(par.d * par.K / denom) + par.c_j / denom)
    chi = 24**2 * 18 * par.K**2 * par.d * u_k * par.H / par.p
    beta = 24 * par.H * math.sqrt(par.d * denom) * math.log(chi)
    return replace(par, c_k=c_k, U_K=u_k, chi=chi, beta=beta)


def batch_count(K, epsilon, d, H, variant="approx_jdp"):
    """Number of batches B (capped at K)."""
    if variant == "non_batched":
        return int(K)
    if variant == "pure_jdp":
        raw = (K * epsilon) ** (1 / 3) / (d ** (2 / 3) * H ** (1 / 3))
    else:
        raw = (K * epsilon) ** 0.4 / (d**0.6 * H**0.2)
    return int(min(max(ceil_tol(raw), 1), K))


def lsvi_params(K, H, d, epsilon, delta, p, variant="approx_jdp", regime="jdp"):
    """All derived quantities of batched LSVI-UCB.

    ``regime="none"`` keeps the batch schedule but zeroes every noise
    quantity, giving the non-private batched algorithm.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if regime not in ("none", "jdp"):
        raise ValueError("linear agent supports regimes 'none' and 'jdp'")
    if K < 1 or H < 1 or d < 1:
        raise ValueError("K, H and d must be positive")
    if not (0 < p < 1):
        raise ValueError("p must lie in (0, 1)")
    pure = variant == "pure_jdp"
    if pure:
        PrivacyBudget(epsilon, 0.0)
        delta = 0.0
    else:
        try:
            PrivacyBudget(epsilon, delta).require_approx()
        except PureDpUnsupported as exc:
            raise InvalidBudget(f"{exc} (or choose variant 'pure_jdp')") from None
    B = batch_count(K, epsilon, d, H, variant)
    B0 = tree_depth(B)
    lam = float(d)
    dist = "laplace" if pure else "gaussian"
    alpha = p / (6 * K * H)
    if regime == "none":
        s_lam = s_u = upsilon = c_j = 0.0
    elif pure:
        s_lam, s_u = lsvi_pure_scales(epsilon, H, d, B)
        upsilon = laplace_matrix_eigen_bound(d, s_lam, B0**2, alpha)
        c_j = laplace_vector_bound(d, s_u, 1, alpha)
    else:
        logsq = math.log(32 * H * B0 * B / delta) ** 2
        s_lam = 128 / epsilon * math.sqrt(B * H * B0) * logsq
        s_u = 128 / epsilon * H * math.sqrt(H * B) * logsq
        upsilon = gauss_matrix_eigen_bound(d, s_lam, B0**2, alpha)
        c_j = gauss_vector_bound(d, s_u, 1, alpha / d)
    par = LsviParams(K=int(K), H=int(H), d=int(d), epsilon=float(epsilon), delta=float(delta), p=float(p),
                     variant=variant, regime=regime, dist=dist, lam=lam, B=B, B0=B0,
                     batch_len=int(math.ceil(K / B)), sigma_lambda=s_lam, sigma_u=s_u,
                     upsilon=upsilon, c_k=0.0, c_j=c_j, U_K=0.0, chi=0.0, beta=0.0)
    return _finish(par)


def lsvi_pure_scales(epsilon, H, d, B):
    """Laplace scales ``(design tree node, response vector)`` for pure JDP.

    Simple composition over the two statistics, the H stages and the B
    releases, and for the tree over its ``B0`` levels. l1 sensitivities of
    ``phi phi^T`` and of the response sum are ``2d`` and ``4H sqrt(d)``.
    """
    B0 = tree_depth(B)
    return (
        laplace_scale(2.0 * d, epsilon / (2 * H * B * B0)),
        laplace_scale(4.0 * H * math.sqrt(d), epsilon / (2 * H * B)),
    )


def lsvi_scores(phi_sa, lam_tilde, w_tilde, beta, H):
    """Clipped optimistic scores ``clip(phi^T w + beta ||phi||_{Lam^-1}, 0, H)``, one per row."""
    low = cholesky_factor(lam_tilde)
    phi_sa = np.asarray(phi_sa, dtype=np.float64)
    return np.clip(phi_sa @ w_tilde + beta * inv_norms_factored(low, phi_sa), 0.0, float(H))


def lsvi_act(q_table, s, h):
    """Greedy action at (s, h); ties go to the lowest index."""
    return int(np.argmax(q_table[h, s]))


def linear_q_table(phi, lam_tilde, w_tilde, beta, cap):
    q = _accel.linear_q_table(phi, lam_tilde, w_tilde, beta, cap)
    if q is None:
        raise NotPositiveDefinite("design matrix is not positive definite")
    return q


class LsviUcbBatch:
    """Batched LSVI-UCB over a tabular MDP in its linear encoding.

    Args:
        mdp: environment.
        params: ``LsviParams`` (already scaled, if an override is used).
        seed: run seed.
    """

    name = "lsvi_ucb_batch"

    def __init__(self, mdp, params, seed):
        self.mdp = mdp
        self.enc = LinearEncoding(mdp)
        self.par = params
        self.H, self.d = mdp.H, self.enc.d
        if params.d != self.d or params.H != self.H:
            raise ValueError("parameters do not match the environment")
        H, d, K = self.H, self.d, params.K
        self.phi = self.enc.features
        self.lam_eye = params.lam * np.eye(d)
        self.gram = np.zeros((H, d, d))
        self.lam_tilde = np.broadcast_to(self.lam_eye, (H, d, d)).copy()
        self.w_tilde = np.zeros((H, d))
        self.states = np.zeros((K, H + 1), dtype=np.int64)
        self.actions = np.zeros((K, H), dtype=np.int64)
        self.private = params.regime != "none"
        self.trees = None
        self.eta = None
        if self.private:
            self.trees = [NoiseTree(params.B, d, "matrix", params.sigma_lambda, (seed, ROLE_TREE, 3, h, 0),
                                    params.dist) for h in range(H)]
            rng = make_rng((seed, ROLE_ETA))
            self.eta = np.stack([
                np.stack([sample_vector(d, params.sigma_u, rng, params.dist) for _ in range(H)])
                for _ in range(params.B)
            ])
        self.b = 0
        self.k = 1
        self._updates = set(params.update_episodes)
        self.good_event = True
        self.max_weight_norm = 0.0
        self.max_summand_norm = 0.0
        self.output_log = [(self.lam_tilde.copy(), self.w_tilde.copy())]
        self._refresh_tables()

    def _refresh_tables(self):
        self.q = np.stack([
            linear_q_table(self.phi, self.lam_tilde[h], self.w_tilde[h], self.par.beta, float(self.H))
            for h in range(self.H)
        ])
        n_sa = self.enc.S * self.enc.A
        feats = self.phi.reshape(n_sa, self.d)
        self.bonus_norms = np.stack([
            inv_norms_factored(cholesky_factor(self.lam_tilde[h]), feats).reshape(self.enc.S, self.enc.A)
            for h in range(self.H)
        ])

    def policy(self):
        return greedy_policy(self.q)

    def batch_update(self):
        """Recompute every stage's estimate with the data of episodes 1..k."""
        par, H = self.par, self.H
        k = self.k
        rows = np.arange(k)
        nb = self.b + 1
        good = True
        v_next = np.zeros(self.enc.S)
        for h in range(H - 1, -1, -1):
            s_h = self.states[:k, h]
            a_h = self.actions[:k, h]
            lam_t = self.lam_eye + self.gram[h]
            feats = self.phi[s_h, a_h]
            targets = self.mdp.rewards[h, s_h, a_h] + v_next[self.states[rows, h + 1]]
            u_t = feats.T @ targets
            if k:
                summand = float(np.max(np.abs(targets) * np.linalg.norm(feats, axis=1)))
                self.max_summand_norm = max(self.max_summand_norm, summand)
            if self.private:
                tree_noise = self.trees[h].prefix_noise(nb)
                lam_t = lam_t + par.shift * np.eye(self.d) + tree_noise
                eta = self.eta[nb - 1, h]
                u_t = u_t + eta
                good &= operator_norm(tree_noise) <= par.upsilon and np.linalg.norm(eta) <= par.c_j
            self.lam_tilde[h] = lam_t
            self.w_tilde[h] = psd_solve(lam_t, u_t)
            q_h = linear_q_table(self.phi, lam_t, self.w_tilde[h], par.beta, float(H))
            v_next = q_h.max(axis=1)
        self.b = nb
        self.good_event = bool(good)
        self.max_weight_norm = float(np.max(np.linalg.norm(self.w_tilde, axis=1)))
        self.output_log.append((self.lam_tilde.copy(), self.w_tilde.copy()))
        self._refresh_tables()

    def episode(self, env_rng):
        H, k = self.H, self.k
        policy = self.policy()
        s = self.mdp.sample_initial(env_rng)
        s1 = s
        self.states[k - 1, 0] = s
        bonus = 0.0
        for h in range(H):
            a = lsvi_act(self.q, s, h)
            bonus += min(float(H), 2 * self.par.beta * self.bonus_norms[h, s, a])
            s_next, _ = self.mdp.step(s, a, h, env_rng)
            self.actions[k - 1, h] = a
            self.states[k - 1, h + 1] = s_next
            x = self.phi[s, a]
            self.gram[h] += np.outer(x, x)
            s = s_next
        log = EpisodeLog(
            k=k, s1=int(s1), policy=policy, optimistic_value=float(self.q[0, s1].max()),
            beta=self.par.beta, batch=self.b, coverage_violations=0 if self.good_event else 1,
            covered=self.good_event, bonus_sum=bonus,
            extras={"max_weight_norm": self.max_weight_norm},
        )
        if k in self._updates:
            self.batch_update()
        self.k += 1
        return log
