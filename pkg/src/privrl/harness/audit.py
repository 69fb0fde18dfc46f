"""Privacy-arithmetic auditor.

For every noise mechanism an agent runs, rebuild the per-invocation
budget from the composition chain, derive the smallest admissible noise
scale with the basic mechanism calibration, and compare it with the scale
the agent actually injects (calibration times ``scale_override``).
"""

import math
from dataclasses import asdict, dataclass

from ..agent_mixture import tree_depth
from ..privacy import PrivacyBudget, compose_splits, gaussian_sigma, laplace_scale
from .config import calibrate

# relative slack for closed forms that equal the requirement analytically
RATIO_TOL = 1e-12


@dataclass(frozen=True)
class MechanismAudit:
    name: str
    mechanism: str
    chain: tuple
    epsilon: float
    delta: float
    sensitivity: float
    required: float
    configured: float

    @property
    def ratio(self):
        return self.configured / self.required

    @property
    def passed(self):
        return self.ratio >= 1.0 - RATIO_TOL

    def to_dict(self):
        out = asdict(self)
        out["chain"] = [list(step) for step in self.chain]
        out.update(ratio=self.ratio, status="PASS" if self.passed else "FAIL")
        return out


@dataclass(frozen=True)
class AuditReport:
    algorithm: str
    regime: str
    budget: PrivacyBudget
    scale_override: float
    rows: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def to_dict(self):
        return {"algorithm": self.algorithm, "regime": self.regime, "epsilon": self.budget.epsilon,
                "delta": self.budget.delta, "scale_override": self.scale_override,
                "status": "PASS" if self.passed else "FAIL",
                "mechanisms": [r.to_dict() for r in self.rows]}

    def format(self):
        lines = [f"audit {self.algorithm} regime={self.regime} epsilon={self.budget.epsilon:g} "
                 f"delta={self.budget.delta:g} scale_override={self.scale_override:g}"]
        if not self.rows:
            lines.append("  no noise mechanisms (non-private configuration)")
        for r in self.rows:
            lines.append(
                f"  {'PASS' if r.passed else 'FAIL'}  {r.name:<34} {r.mechanism:<8} "
                f"eps={r.epsilon:.6g} delta={r.delta:.6g} sens={r.sensitivity:.6g} "
                f"required={r.required:.6g} configured={r.configured:.6g} ratio={r.ratio:.6f}"
            )
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _row(name, budget, chain, sensitivity, configured, pure):
    piece = compose_splits(budget, chain)
    if pure:
        required = laplace_scale(sensitivity, piece.epsilon)
        mech = "laplace"
    else:
        required = gaussian_sigma(sensitivity, piece)
        mech = "gaussian"
    return MechanismAudit(name, mech, tuple(chain), piece.epsilon, piece.delta, sensitivity,
                          required, configured)


def _vtr_rows(cal, budget, H, d, K):
    prof = cal.profile
    pure = cal.dist == "laplace"
    if cal.regime == "ldp":
        stages = [("simple", 2 * H)]
    elif pure:
        stages = [("simple", 2 * H * tree_depth(K))]
    else:
        stages = [("simple", 2), ("advanced", H), ("advanced", tree_depth(K))]
    where = "tree node" if cal.regime == "jdp" else "user payload"
    if pure:
        sens_m, sens_v = 2.0 * d * H**2, 2.0 * math.sqrt(d) * H**2
    else:
        sens_m = sens_v = 2.0 * H**2
    return [
        _row(f"gram matrix {where}", budget, stages, sens_m, prof.effective_sigma_matrix, pure),
        _row(f"response vector {where}", budget, stages, sens_v, prof.effective_sigma_vector, pure),
    ]


def _vtrplus_rows(cal, budget, H, d, K):
    if cal.regime == "jdp":
        stages = [("simple", 4), ("advanced", H), ("advanced", tree_depth(K))]
        where = "tree node"
    else:
        stages = [("simple", 4 * H)]
        where = "user payload"
    rows = []
    for label, prof, sens in (("first-moment", cal.first, 2.0 * d), ("second-moment", cal.second, 2.0 * H**4)):
        rows.append(_row(f"{label} gram {where}", budget, stages, sens, prof.effective_sigma_matrix, False))
        rows.append(_row(f"{label} response {where}", budget, stages, sens, prof.effective_sigma_vector, False))
    return rows


def _lsvi_rows(par, budget):
    H, B, B0, d = par.H, par.B, par.B0, par.d
    if par.dist == "laplace":
        return [
            _row("gram tree node", budget, [("simple", 2 * H * B * B0)], 2.0 * d, par.sigma_lambda, True),
            _row("response batch noise", budget, [("simple", 2 * H * B)], 4.0 * H * math.sqrt(d),
                 par.sigma_u, True),
        ]
    per_stage = [("simple", 2), ("advanced", H), ("advanced", B)]
    return [
        _row("gram tree node", budget, per_stage + [("advanced", B0)], 2.0, par.sigma_lambda, False),
        _row("response batch noise", budget, per_stage, 4.0 * H, par.sigma_u, False),
    ]


def audit_privacy_arithmetic(agent, env_spec, K):
    """Audit report for ``agent`` (an AgentSpec) on an environment of shape ``env_spec``."""
    pure = agent.dist == "laplace" or (agent.algorithm == "lsvi_ucb_batch" and agent.variant == "pure_jdp")
    budget = PrivacyBudget(agent.epsilon, 0.0 if pure else agent.delta)
    if not pure:
        budget.require_approx()
    cal = calibrate(agent, env_spec, K)
    H = env_spec.H
    if agent.regime == "none":
        rows = []
    elif agent.algorithm == "ucrl_vtr":
        rows = _vtr_rows(cal, budget, H, cal.d, K)
    elif agent.algorithm == "ucrl_vtr_plus":
        rows = _vtrplus_rows(cal, budget, H, cal.d, K)
    else:
        rows = _lsvi_rows(cal, budget)
    return AuditReport(agent.algorithm, agent.regime, budget, agent.scale_override, tuple(rows))
