"""Numerical property checks run by ``mekfkit check``.

Each check returns a :class:`CheckResult` carrying the measured quantity
and the bound it is compared against, so the report shows how much
margin there is rather than only a verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import engine
from .attitude import exp_quat, quat_normalize, quat_to_matrix
from .error_models import (
    build_h_ref_invariant,
    group_affine_residual,
    se3_attitude_bias_dynamics,
    so3_kinematics,
)
from .spacecraft import SpacecraftConfig, TruthState, step_truth


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float
    below: bool = True  # pass when value < bound; otherwise value > bound
    label: str = "residual"

    @property
    def passed(self) -> bool:
        ok = self.value < self.bound if self.below else self.value > self.bound
        return bool(ok and np.isfinite(self.value))

    def line(self) -> str:
        op = "<" if self.below else ">"
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {verdict} ({self.label} {self.value:.3g} {op} {self.bound:g})"


def _rotation(rng, n=None):
    shape = (4,) if n is None else (n, 4)
    return quat_to_matrix(quat_normalize(rng.standard_normal(shape)))


def check_so3_affine(rng, trials: int = 1000) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        A1, A2 = _rotation(rng), _rotation(rng)
        worst = max(worst, group_affine_residual(so3_kinematics, A1, A2, rng.standard_normal(3)))
    return CheckResult("group-affine SO(3)", worst, 1e-12, label="max residual")


def _se3(rng):
    chi = np.eye(4)
    chi[:3, :3] = _rotation(rng)
    chi[:3, 3] = rng.standard_normal(3)
    return chi


def check_se3_not_affine(rng, trials: int = 100) -> CheckResult:
    least = np.inf
    for _ in range(trials):
        r = group_affine_residual(se3_attitude_bias_dynamics, _se3(rng), _se3(rng), rng.standard_normal(3))
        least = min(least, r)
    return CheckResult("SE(3) attitude-bias state not group affine", least, 1e-3, below=False,
                       label="min residual")


def _random_states(rng, n):
    q = quat_normalize(rng.standard_normal((n, 4)))
    beta = rng.normal(scale=1e-3, size=(n, 3))
    M = rng.normal(scale=0.2, size=(n, 6, 6))
    P = M @ np.swapaxes(M, 1, 2) + 1e-4 * np.eye(6)
    return engine.FilterState.create(q, beta, P)


def _random_obs(rng, n):
    obs = []
    for std in (0.0175, 0.0873):
        r = rng.standard_normal(3)
        r /= np.linalg.norm(r)
        b = rng.standard_normal((n, 3))
        obs.append(engine.VectorObservation(b, r, std**2 * np.eye(3)))
    return obs


def check_transformed_update(rng, n: int = 100) -> CheckResult:
    """Estimate-dependent and rotated measurement forms give the same update."""
    state = _random_states(rng, n)
    obs = _random_obs(rng, n)
    dev = 0.0
    for inv, traj in (("MEKF-ref", "MEKF-ref-traj"), ("QRIEKF", "QRIEKF-traj")):
        a = engine.update(state, obs, engine.get_model(inv))
        b = engine.update(state, obs, engine.get_model(traj))
        qa = a.q * np.sign(a.q[:, 3:])
        qb = b.q * np.sign(b.q[:, 3:])
        dev = max(dev, np.abs(qa - qb).max(), np.abs(a.beta - b.beta).max(), np.abs(a.P - b.P).max())
    return CheckResult("transformed-innovation equivalence (ref, left SE(3))", float(dev), 1e-9,
                       label="max deviation")


def check_invariant_h(rng, n: int = 100) -> CheckResult:
    """Rotated reference-error H does not change with the attitude prediction.

    The body-error invariant H takes no attitude argument at all.
    """
    b = rng.standard_normal(3)
    r = rng.standard_normal(3)
    H1 = build_h_ref_invariant(np.eye(3), b, r, np.eye(3)).H
    differing = 0
    for A in _rotation(rng, n):
        differing += H1.tobytes() != build_h_ref_invariant(A, b, r, np.eye(3)).H.tobytes()
    return CheckResult("invariant H independent of prediction", float(differing), 0.5,
                       label="differing matrices")


def check_conservation(steps: int = 1000, dt: float = 1.0) -> CheckResult:
    """Torque-free asymmetric body: kinetic energy and ‖Jω‖ over RK4 steps."""
    cfg = SpacecraftConfig()
    J = cfg.inertia
    state = TruthState(quat_normalize(exp_quat(np.array([0.3, -0.2, 0.1]))),
                       np.array([0.02, -0.015, 0.01]), np.zeros(3), 0.0)
    e0 = 0.5 * state.omega @ J @ state.omega
    h0 = np.linalg.norm(J @ state.omega)
    worst = 0.0
    for _ in range(steps):
        state = step_truth(state, cfg, dt, gravity=False)
        e = 0.5 * state.omega @ J @ state.omega
        h = np.linalg.norm(J @ state.omega)
        worst = max(worst, abs(e - e0) / e0, abs(h - h0) / h0)
    return CheckResult("torque-free energy and momentum", worst, 1e-8, label="max relative drift")


CHECKS: List[Callable[[np.random.Generator], CheckResult]] = [
    check_so3_affine,
    check_se3_not_affine,
    check_transformed_update,
    check_invariant_h,
    lambda rng: check_conservation(),
]


def run_checks(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    return [c(rng) for c in CHECKS]
