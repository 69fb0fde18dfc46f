"""Optimistic value-targeted regression for linear-mixture MDPs.

Two agents share the same user/server protocol:

* ``UcrlVtr``: one ridge regression per stage on value targets, with an
  optimism bonus ``beta * ||phi_V||_{Lambda^-1}``.
* ``UcrlVtrPlus``: a variance-weighted first-moment regression plus a
  second-moment regression that feeds the variance estimate.

Privacy enters only through the statistics the server aggregates: under
JDP the server adds tree-aggregated noise and a deterministic shift; under
LDP each user perturbs its own payload and the server only adds the shift.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _accel
from .envs import MixtureEncoding, greedy_policy
from .errors import BetaTooSmall, NotPositiveDefinite, PureDpUnsupported
from .linalg_core import cholesky_factor, inv_norms_factored, psd_solve, weighted_norm
from .privacy import (
    NoiseProfile,
    NoiseTree,
    PrivacyBudget,
    laplace_scale,
    matrix_eigen_bound,
    sample_matrix,
    sample_vector,
    vector_bound,
)

# RNG stream roles; every stream is keyed by (run seed, role, ...)
ROLE_ENV = 0
ROLE_TREE = 1
ROLE_LOCAL = 2

BETA_KINDS = ("none", "generic", "jdp", "ldp", "pure_jdp", "pure_ldp")


def ceil_tol(x):
    """Ceiling that ignores upward rounding error of relative size 1e-12."""
    return int(math.ceil(x - 1e-12 * max(1.0, abs(x))))


def tree_depth(n):
    """``ceil(log2(n) + 1)``: nodes summed per prefix of an n-leaf tree."""
    return ceil_tol(math.log2(n) + 1.0)


# ---------------------------------------------------------------------------
# closed-form calibrations
# ---------------------------------------------------------------------------


def vtr_jdp_sigma(epsilon, delta, H, K):
    """Per-entry std of the tree noise for the JDP UCRL-VTR statistics."""
    PrivacyBudget(epsilon, delta).require_approx()
    k0 = tree_depth(K)
    logs = math.log(8 * H / delta) * math.log(4 / delta) * math.log(16 * H * k0 / delta)
    return 32 * H**2 / epsilon * math.sqrt(2 * H * k0 * logs)


def vtr_ldp_sigma(epsilon, delta, H):
    """Per-entry std of the user-side noise for LDP UCRL-VTR."""
    PrivacyBudget(epsilon, delta).require_approx()
    return 4 * H**3 / epsilon * math.sqrt(2 * math.log(4 * H / delta))


def vtr_pure_scales(regime, epsilon, H, K, d):
    """Laplace scales ``(matrix, vector)`` for the pure-DP UCRL-VTR variants.

    Each released statistic is split by simple composition over the two
    statistics and the H stages, and under JDP also over the tree depth.
    The l1 sensitivities of ``X X^T`` and ``X y`` under a user swap are
    ``2 d H^2`` and ``2 sqrt(d) H^2`` since ``||X||_2 <= H``.
    """
    PrivacyBudget(epsilon, 0.0)
    pieces = 2 * H * (tree_depth(K) if regime == "jdp" else 1)
    eps_piece = epsilon / pieces
    return (
        laplace_scale(2.0 * d * H**2, eps_piece),
        laplace_scale(2.0 * math.sqrt(d) * H**2, eps_piece),
    )


def vtrplus_jdp_sigmas(epsilon, delta, d, H, K):
    """``(sigma_1, sigma_2)`` of the tree noise for JDP UCRL-VTR+."""
    PrivacyBudget(epsilon, delta).require_approx()
    k0 = tree_depth(K)
    root = math.sqrt(
        2 * H * k0 * math.log(16 * H / delta) * math.log(8 / delta) * math.log(32 * H * k0 / delta)
    )
    return 64 * d / epsilon * root, 64 * H**4 / epsilon * root


def vtrplus_ldp_sigmas(epsilon, delta, d, H):
    """``(sigma_1, sigma_2)`` of the user-side noise for LDP UCRL-VTR+."""
    PrivacyBudget(epsilon, delta).require_approx()
    root = math.sqrt(2 * math.log(8 * H / delta))
    return 8 * d * H / epsilon * root, 8 * H**5 / epsilon * root


def _confidence_log_term(d, H, K, p):
    # sqrt(2 H^2 ln(3H (1+KH)^{d/2} / p)), with the power taken in log space
    return math.sqrt(2 * H**2 * (math.log(3 * H / p) + 0.5 * d * math.log1p(K * H)))


def vtr_beta(kind, *, c_w, lam, d, H, K, p, upsilon=0.0, c_k=0.0,
             upsilon_low=None, upsilon_high=None, beta=None):
    """Confidence width for UCRL-VTR.

    For the closed-form kinds (``none``, ``jdp``, ``ldp``, ``pure_jdp``,
    ``pure_ldp``) returns
    ``3 (c_w + 1) sqrt(lam + upsilon) + sqrt(2 H^2 ln(3H (1+KH)^{d/2} / p))``
    with ``upsilon`` the noise eigenvalue bound of the regime.

    ``generic`` evaluates the sufficient condition
    ``((lam + up_high) c_w + c_k) / sqrt(lam + up_low) + log term``; with
    ``beta`` given it is checked (scalars or arrays) and returned, otherwise
    the minimal admissible width is returned. ``up_low`` and ``up_high``
    default to ``upsilon`` and ``3 upsilon``.
    """
    if kind not in BETA_KINDS:
        raise ValueError(f"unknown beta kind {kind!r}")
    if not (0 < p < 1):
        raise ValueError("p must lie in (0, 1)")
    conf = _confidence_log_term(d, H, K, p)
    if kind != "generic":
        return 3 * (c_w + 1) * math.sqrt(lam + upsilon) + conf
    low = upsilon if upsilon_low is None else upsilon_low
    high = 3 * upsilon if upsilon_high is None else upsilon_high
    required = ((lam + np.asarray(high)) * c_w + np.asarray(c_k)) / np.sqrt(lam + np.asarray(low)) + conf
    if beta is None:
        return required if np.ndim(required) else float(required)
    if np.any(np.asarray(beta) < required):
        raise BetaTooSmall(f"beta {beta} below the required width {required}")
    return beta


def vtrplus_betas(k, *, c_w, lam, d, H, K, p, upsilon_1=0.0, upsilon_2=0.0):
    """Widths ``(beta_hat, beta_check, beta_tilde)`` at episode(s) k."""
    k = np.asarray(k, dtype=np.float64)
    ell = np.log(24 * k**2 * H / p)
    base_1 = 3 * (c_w + 1) * math.sqrt(lam + upsilon_1)
    base_2 = 3 * (c_w + 1) * math.sqrt(lam + upsilon_2)
    log_k = math.log1p(K / lam)
    beta_check = base_1 + 8 * d * np.sqrt(log_k * ell) + 4 * math.sqrt(d) * ell
    beta_hat = base_1 + 8 * np.sqrt(d * log_k * ell) + 4 * math.sqrt(d) * ell
    beta_tilde = (base_2 + 8 * np.sqrt(d * H**4 * math.log1p(K * H**4 / (d * lam)) * ell)
                  + 4 * H**2 * ell)
    if beta_hat.ndim == 0:
        return float(beta_hat), float(beta_check), float(beta_tilde)
    return beta_hat, beta_check, beta_tilde


# ---------------------------------------------------------------------------
# calibration bundles
# ---------------------------------------------------------------------------


def _noise_counts(regime, K):
    return tree_depth(K) if regime == "jdp" else K


@dataclass
class VtrCalibration:
    """Everything the UCRL-VTR agent derives from its configuration."""

    regime: str
    dist: str
    epsilon: float
    delta: float
    d: int
    H: int
    K: int
    p: float
    c_w: float
    lam: float
    k0: int
    profile: NoiseProfile
    upsilon: float = 0.0
    c_k: float = 0.0
    beta: float = 0.0

    def to_dict(self):
        out = asdict(self)
        out["profile"] = self.profile.to_dict()
        return out


def calibrate_vtr(*, regime, dist="gaussian", epsilon=1.0, delta=0.1, d, H, K, p, c_w,
                  scale_override=1.0):
    """Noise profile, noise bounds and width for UCRL-VTR.

    ``upsilon`` and ``c_k`` are reported at the effective (overridden)
    scale, since that is what the widths must cover.
    """
    lam = float(H**2)
    k0 = tree_depth(K)
    if regime == "none":
        profile = NoiseProfile(scale_override=scale_override)
        beta = vtr_beta("none", c_w=c_w, lam=lam, d=d, H=H, K=K, p=p)
        return VtrCalibration(regime, dist, epsilon, delta, d, H, K, p, c_w, lam, k0, profile, beta=beta)
    if regime not in ("jdp", "ldp"):
        raise ValueError(f"unknown regime {regime!r}")
    count = _noise_counts(regime, K)
    alpha = p / (6 * K * H)
    if dist == "gaussian":
        sigma = vtr_jdp_sigma(epsilon, delta, H, K) if regime == "jdp" else vtr_ldp_sigma(epsilon, delta, H)
        s_mat = s_vec = sigma
        kind = regime
    elif dist == "laplace":
        s_mat, s_vec = vtr_pure_scales(regime, epsilon, H, K, d)
        kind = "pure_" + regime
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    upsilon = matrix_eigen_bound(dist, d, s_mat, count, alpha)
    c_k = vector_bound(dist, d, s_vec, count, alpha)
    profile = NoiseProfile(regime, dist, s_mat, s_vec, 2 * upsilon, scale_override)
    up_eff = upsilon * scale_override
    beta = vtr_beta(kind, c_w=c_w, lam=lam, d=d, H=H, K=K, p=p, upsilon=up_eff)
    return VtrCalibration(regime, dist, epsilon, delta, d, H, K, p, c_w, lam, k0, profile,
                          upsilon=up_eff, c_k=c_k * scale_override, beta=beta)


@dataclass
class VtrPlusCalibration:
    regime: str
    dist: str
    epsilon: float
    delta: float
    d: int
    H: int
    K: int
    p: float
    c_w: float
    lam: float
    k0: int
    first: NoiseProfile
    second: NoiseProfile
    upsilon_1: float = 0.0
    upsilon_2: float = 0.0
    c_1: float = 0.0
    c_2: float = 0.0

    def betas(self, k):
        return vtrplus_betas(k, c_w=self.c_w, lam=self.lam, d=self.d, H=self.H, K=self.K, p=self.p,
                             upsilon_1=self.upsilon_1, upsilon_2=self.upsilon_2)

    def to_dict(self):
        out = asdict(self)
        out["first"] = self.first.to_dict()
        out["second"] = self.second.to_dict()
        b_hat, b_check, b_tilde = self.betas(self.K)
        out.update(beta_hat_K=b_hat, beta_check_K=b_check, beta_tilde_K=b_tilde)
        return out


def calibrate_vtrplus(*, regime, dist="gaussian", epsilon=1.0, delta=0.1, d, H, K, p, c_w,
                      scale_override=1.0):
    lam = 1.0
    k0 = tree_depth(K)
    if regime == "none":
        none = NoiseProfile(scale_override=scale_override)
        return VtrPlusCalibration(regime, dist, epsilon, delta, d, H, K, p, c_w, lam, k0, none, none)
    if dist != "gaussian":
        raise PureDpUnsupported("UCRL-VTR+ is calibrated for Gaussian noise only")
    if regime == "jdp":
        s1, s2 = vtrplus_jdp_sigmas(epsilon, delta, d, H, K)
    elif regime == "ldp":
        s1, s2 = vtrplus_ldp_sigmas(epsilon, delta, d, H)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    count = _noise_counts(regime, K)
    alpha = p / (24 * K * H)
    up1 = matrix_eigen_bound(dist, d, s1, count, alpha)
    up2 = matrix_eigen_bound(dist, d, s2, count, alpha)
    c1 = vector_bound(dist, d, s1, count, alpha)
    c2 = vector_bound(dist, d, s2, count, alpha)
    first = NoiseProfile(regime, dist, s1, s1, 2 * up1, scale_override)
    second = NoiseProfile(regime, dist, s2, s2, 2 * up2, scale_override)
    so = scale_override
    return VtrPlusCalibration(regime, dist, epsilon, delta, d, H, K, p, c_w, lam, k0, first, second,
                              upsilon_1=up1 * so, upsilon_2=up2 * so, c_1=c1 * so, c_2=c2 * so)


# ---------------------------------------------------------------------------
# shared regression stack
# ---------------------------------------------------------------------------


class _Stack:
    """One private ridge regression per stage.

    The server only sees the (possibly user-perturbed) payload sums
    ``gram`` and ``resp``; server-side noise is added on release.
    """

    def __init__(self, H, d, lam, profile, K, seed, tag):
        self.H, self.d, self.lam = H, d, lam
        self.profile = profile
        self.gram = np.zeros((H, d, d))
        self.resp = np.zeros((H, d))
        self.lam_eye = lam * np.eye(d)
        self.lam_tilde = np.broadcast_to(self.lam_eye, (H, d, d)).copy()
        self.u_tilde = np.zeros((H, d))
        self.w_tilde = np.zeros((H, d))
        self.seed, self.tag = seed, tag
        self.trees = None
        if profile.regime == "jdp":
            self.trees = [
                (
                    NoiseTree(K, d, "matrix", profile.effective_sigma_matrix,
                              (seed, ROLE_TREE, tag, h, 0), profile.dist),
                    NoiseTree(K, d, "vector", profile.effective_sigma_vector,
                              (seed, ROLE_TREE, tag, h, 1), profile.dist),
                )
                for h in range(H)
            ]

    def local_noise(self, k, h):
        """User-side perturbation ``(B1, g1)`` for episode k, stage h (LDP only)."""
        prof = self.profile
        rng = np.random.default_rng((self.seed, ROLE_LOCAL, self.tag, k, h))
        mat = sample_matrix(self.d, prof.effective_sigma_matrix, rng, prof.dist)
        vec = sample_vector(self.d, prof.effective_sigma_vector, rng, prof.dist)
        return mat, vec

    def privatize(self, k, h, outer, response):
        if self.profile.regime != "ldp":
            return outer, response
        mat, vec = self.local_noise(k, h)
        return outer + mat, response + vec

    def server_noise(self, k, h):
        """Server-side ``(B2, g2)`` released after k episodes, or ``(None, None)``."""
        prof = self.profile
        if prof.regime == "none":
            return None, None
        shift = prof.effective_shift * np.eye(self.d)
        if prof.regime == "ldp":
            return shift, None
        tree_m, tree_v = self.trees[h]
        return tree_m.prefix_noise(k) + shift, tree_v.prefix_noise(k)

    def update(self, k, payload_mats, payload_vecs):
        for h in range(self.H):
            self.gram[h] += payload_mats[h]
            self.resp[h] += payload_vecs[h]
            b_noise, g_noise = self.server_noise(k, h)
            lam_t = self.lam_eye + self.gram[h]
            u_t = self.resp[h]
            if b_noise is not None:
                lam_t = lam_t + b_noise
            if g_noise is not None:
                u_t = u_t + g_noise
            self.lam_tilde[h] = lam_t
            self.u_tilde[h] = u_t
            self.w_tilde[h] = psd_solve(lam_t, u_t)


def _plan(rewards, lam_tilde, w, beta, rho, cap):
    q, v, failed = _accel.mixture_plan(rewards, lam_tilde, w, beta, rho, cap)
    if failed >= 0:
        raise NotPositiveDefinite(f"design matrix of stage {failed + 1} is not positive definite")
    return q, v


@dataclass
class EpisodeLog:
    """What one episode reports to the harness."""

    k: int
    s1: int
    policy: np.ndarray
    optimistic_value: float
    beta: float
    batch: int
    coverage_violations: int
    covered: bool
    bonus_sum: float = 0.0
    extras: dict = field(default_factory=dict)


def vtr_plan(lam_tilde, w_tilde, beta, enc, rewards):
    """Optimistic Q and V tables for one episode.

    Backward induction from ``V_{H+1} = 0`` with
    ``Q = clip(r + <phi_V, w> + beta ||phi_V||_{Lambda^-1}, 0, H)`` and
    ``V = max_a Q``. Returns ``(q, v)`` of shapes (H, S, A) and (H+1, S).
    """
    return _plan(rewards, lam_tilde, w_tilde, beta, enc.rho, float(enc.H))


class UcrlVtr:
    """UCRL-VTR with a pluggable privacy regime.

    Args:
        mdp: environment the users live in (rewards are known to the agent).
        calibration: a ``VtrCalibration`` from ``calibrate_vtr``.
        seed: run seed; keys every random stream of the run.
    """

    name = "ucrl_vtr"

    def __init__(self, mdp, calibration, seed):
        self.mdp = mdp
        self.enc = MixtureEncoding(mdp)
        self.cal = calibration
        self.H, self.d = mdp.H, self.enc.d
        if calibration.d != self.d or calibration.H != self.H:
            raise ValueError("calibration does not match the environment")
        self.stack = _Stack(self.H, self.d, calibration.lam, calibration.profile, calibration.K, seed, 0)
        self.seed = seed
        self.k = 1
        self._beta = 0.0

    @property
    def beta(self):
        return self._beta

    def current_beta(self):
        # widths are constant here; the running max keeps the sequence monotone
        self._beta = max(self._beta, self.cal.beta)
        return self._beta

    def plan(self):
        return vtr_plan(self.stack.lam_tilde, self.stack.w_tilde, self.current_beta(), self.enc,
                        self.mdp.rewards)

    def coverage_norms(self):
        """``||w_h - w~_h||_{Lambda~_h}`` for the estimate used this episode."""
        st = self.stack
        return np.array([
            weighted_norm(st.lam_tilde[h], self.enc.weights[h] - st.w_tilde[h]) for h in range(self.H)
        ])

    def user_round(self, q, v, env_rng):
        """Play one episode greedily and build the per-stage payloads."""
        H, d = self.H, self.d
        states = np.zeros(H + 1, dtype=np.int64)
        actions = np.zeros(H, dtype=np.int64)
        xs = np.zeros((H, d))
        ys = np.zeros(H)
        mats = np.zeros((H, d, d))
        vecs = np.zeros((H, d))
        s = self.mdp.sample_initial(env_rng)
        states[0] = s
        for h in range(H):
            a = int(np.argmax(q[h, s]))
            s_next, _ = self.mdp.step(s, a, h, env_rng)
            x = self.enc.phi_v(v[h + 1], s, a)
            y = v[h + 1, s_next]
            mats[h], vecs[h] = self.stack.privatize(self.k, h, np.outer(x, x), x * y)
            xs[h], ys[h] = x, y
            actions[h] = a
            states[h + 1] = s = s_next
        return {"states": states, "actions": actions, "X": xs, "y": ys,
                "payload_matrix": mats, "payload_vector": vecs}

    def server_update(self, transcript):
        self.stack.update(self.k, transcript["payload_matrix"], transcript["payload_vector"])
        self.k += 1

    def episode(self, env_rng):
        q, v = self.plan()
        norms = self.coverage_norms()
        violations = int(np.sum(norms > self._beta))
        tr = self.user_round(q, v, env_rng)
        s1 = int(tr["states"][0])
        log = EpisodeLog(
            k=self.k, s1=s1, policy=greedy_policy(q), optimistic_value=float(v[0, s1]),
            beta=self._beta, batch=self.k - 1, coverage_violations=violations,
            covered=violations == 0,
        )
        self.server_update(tr)
        return log


# ---------------------------------------------------------------------------
# UCRL-VTR+
# ---------------------------------------------------------------------------


def vtrplus_variance(phi_first, phi_second, w_hat, w_second, low_hat, low_second,
                     beta_check, beta_tilde, H, d):
    """Variance estimate, its correction and the regression weight.

    Returns ``(sigma_bar_sq, e_term, var_est)`` with
    ``var_est = clip(<phi_V2, w2>, 0, H^2) - clip(<phi_V, w_hat>, 0, H)^2``,
    ``e_term = min(H^2, 2 H beta_check ||phi_V||_{Lhat^-1})
    + min(H^2, beta_tilde ||phi_V2||_{L2^-1})`` and
    ``sigma_bar_sq = max(H^2 / d, var_est + e_term)``.
    """
    second = min(max(float(phi_second @ w_second), 0.0), float(H**2))
    first = min(max(float(phi_first @ w_hat), 0.0), float(H))
    var_est = second - first * first
    e_term = (min(H**2, 2 * H * beta_check * inv_norms_factored(low_hat, phi_first))
              + min(H**2, beta_tilde * inv_norms_factored(low_second, phi_second)))
    return max(H**2 / d, var_est + e_term), e_term, var_est


class UcrlVtrPlus:
    """Variance-aware UCRL-VTR+ with the same privacy plumbing as UCRL-VTR."""

    name = "ucrl_vtr_plus"

    def __init__(self, mdp, calibration, seed):
        self.mdp = mdp
        self.enc = MixtureEncoding(mdp)
        self.cal = calibration
        self.H, self.d = mdp.H, self.enc.d
        if calibration.d != self.d or calibration.H != self.H:
            raise ValueError("calibration does not match the environment")
        K = calibration.K
        self.first = _Stack(self.H, self.d, calibration.lam, calibration.first, K, seed, 1)
        self.second = _Stack(self.H, self.d, calibration.lam, calibration.second, K, seed, 2)
        self.seed = seed
        self.k = 1
        self._betas = (0.0, 0.0, 0.0)

    def current_betas(self):
        new = self.cal.betas(self.k)
        self._betas = tuple(max(a, b) for a, b in zip(self._betas, new))
        return self._betas

    def plan(self):
        beta_hat = self.current_betas()[0]
        return vtr_plan(self.first.lam_tilde, self.first.w_tilde, beta_hat, self.enc, self.mdp.rewards)

    def coverage_norms(self):
        st = self.first
        return np.array([
            weighted_norm(st.lam_tilde[h], self.enc.weights[h] - st.w_tilde[h]) for h in range(self.H)
        ])

    def user_round(self, q, v, env_rng):
        H, d = self.H, self.d
        beta_hat, beta_check, beta_tilde = self._betas
        states = np.zeros(H + 1, dtype=np.int64)
        actions = np.zeros(H, dtype=np.int64)
        sig_sq = np.zeros(H)
        mats1, vecs1 = np.zeros((H, d, d)), np.zeros((H, d))
        mats2, vecs2 = np.zeros((H, d, d)), np.zeros((H, d))
        s = self.mdp.sample_initial(env_rng)
        states[0] = s
        for h in range(H):
            a = int(np.argmax(q[h, s]))
            s_next, _ = self.mdp.step(s, a, h, env_rng)
            actions[h] = a
            states[h + 1] = s_next
            v_next = v[h + 1]
            phi1 = self.enc.phi_v(v_next, s, a)
            phi2 = self.enc.phi_v(v_next * v_next, s, a)
            low_hat = cholesky_factor(self.first.lam_tilde[h])
            low_second = cholesky_factor(self.second.lam_tilde[h])
            sig_sq[h], _, _ = vtrplus_variance(
                phi1, phi2, self.first.w_tilde[h], self.second.w_tilde[h], low_hat, low_second,
                beta_check, beta_tilde, H, d,
            )
            y = v_next[s_next]
            mats1[h], vecs1[h] = self.first.privatize(
                self.k, h, np.outer(phi1, phi1) / sig_sq[h], phi1 * y / sig_sq[h])
            mats2[h], vecs2[h] = self.second.privatize(self.k, h, np.outer(phi2, phi2), phi2 * (y * y))
            s = s_next
        return {"states": states, "actions": actions, "sigma_bar_sq": sig_sq,
                "first": (mats1, vecs1), "second": (mats2, vecs2)}

    def server_update(self, transcript):
        self.first.update(self.k, *transcript["first"])
        self.second.update(self.k, *transcript["second"])
        self.k += 1

    def episode(self, env_rng):
        q, v = self.plan()
        beta_hat = self._betas[0]
        norms = self.coverage_norms()
        violations = int(np.sum(norms > beta_hat))
        tr = self.user_round(q, v, env_rng)
        s1 = int(tr["states"][0])
        log = EpisodeLog(
            k=self.k, s1=s1, policy=greedy_policy(q), optimistic_value=float(v[0, s1]),
            beta=beta_hat, batch=self.k - 1, coverage_violations=violations,
            covered=violations == 0, extras={"min_sigma_bar_sq": float(tr["sigma_bar_sq"].min())},
        )
        self.server_update(tr)
        return log
