"""Runtime behaviors of the demonstration services.

All models work in deviation coordinates around an operating point, while
estimates, references and commands cross the API in absolute units
(levels in m, inflow in m^3/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .config import KalmanConfig, MpcConfig, PidGains, PlantParams

LABELS = ("h1", "h2", "h3")


class NumericalContractError(ValueError):
    pass


class MpcInfeasibleError(RuntimeError):
    def __init__(self, message: str, soft_fallback_available: bool = True):
        super().__init__(message)
        self.soft_fallback_available = soft_fallback_available


def discretize(A_c: np.ndarray, B_c: np.ndarray, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    n, m = B_c.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = expm(M * T)
    return E[:n, :n], E[:n, n:]


@dataclass(frozen=True, eq=False)
class LTIModel:
    A: np.ndarray
    B: np.ndarray
    state_labels: tuple[str, ...]
    T_s: float
    x_op: np.ndarray = None
    u_op: float = 0.0
    A_c: Optional[np.ndarray] = None
    B_c: Optional[np.ndarray] = None

    def __post_init__(self):
        A, B = np.atleast_2d(np.asarray(self.A, float)), np.asarray(self.B, float).reshape(-1, 1)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or len(self.state_labels) != n:
            raise NumericalContractError("inconsistent model dimensions")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        x_op = np.zeros(n) if self.x_op is None else np.asarray(self.x_op, float).reshape(n)
        object.__setattr__(self, "x_op", x_op)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def continuous(cls, A_c, B_c, labels, T_s, x_op=None, u_op=0.0) -> "LTIModel":
        A_c = np.atleast_2d(np.asarray(A_c, float))
        B_c = np.asarray(B_c, float).reshape(-1, 1)
        A, B = discretize(A_c, B_c, T_s)
        return cls(A, B, tuple(labels), T_s, x_op, u_op, A_c, B_c)

    def resample(self, T_s: float) -> "LTIModel":
        if self.A_c is None:
            raise NumericalContractError("model has no continuous-time form to resample")
        return LTIModel.continuous(self.A_c, self.B_c, self.state_labels, T_s, self.x_op, self.u_op)


def build_models(params: PlantParams, T_s: float) -> tuple[LTIModel, LTIModel, LTIModel]:
    """Linearized low (h3), medium (h2, h3) and high (h1, h2, h3) tank models.

    The reduced models treat the upstream tanks as instantaneous, so the
    inflow reaches the first modelled tank directly.
    """
    if T_s <= 0:
        raise NumericalContractError("T_s must be > 0")
    (h1, h2, h3), q = params.operating_point()
    A1, A2, A3 = params.area

    def slope(c, dh):
        # d/d(dh) of c*sqrt(2 g dh)
        return c * params.g / math.sqrt(2 * params.g * dh)

    k12, k23, k3 = slope(params.c12, h1 - h2), slope(params.c23, h2 - h3), slope(params.c3, h3)
    high = LTIModel.continuous(
        [[-k12 / A1, k12 / A1, 0.0],
         [k12 / A2, -(k12 + k23) / A2, k23 / A2],
         [0.0, k23 / A3, -(k23 + k3) / A3]],
        [1 / A1, 0.0, 0.0], LABELS, T_s, (h1, h2, h3), q,
    )
    medium = LTIModel.continuous(
        [[-k23 / A2, k23 / A2], [k23 / A3, -(k23 + k3) / A3]],
        [1 / A2, 0.0], LABELS[1:], T_s, (h2, h3), q,
    )
    low = LTIModel.continuous([[-k3 / A3]], [1 / A3], LABELS[2:], T_s, (h3,), q)
    return low, medium, high


def project_estimate(x: np.ndarray, labels: Sequence[str], target: LTIModel) -> np.ndarray:
    """Carry shared states over to `target`; states it adds start at its operating point."""
    known = dict(zip(labels, np.asarray(x, float)))
    return np.array([known.get(lbl, target.x_op[i]) for i, lbl in enumerate(target.state_labels)])


# -- Kalman filter -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EstimatorState:
    x_hat: np.ndarray
    P: np.ndarray

    @classmethod
    def prior(cls, model: LTIModel, x0, p0: float) -> "EstimatorState":
        return cls(np.asarray(x0, float).copy(), p0 * np.eye(model.n))


def _check_psd(P: np.ndarray, tol: float = 1e-9) -> None:
    if np.max(np.abs(P - P.T)) > tol or np.linalg.eigvalsh((P + P.T) / 2).min() < -tol:
        raise NumericalContractError("covariance is not symmetric positive semidefinite")


def kf_step(
    est: EstimatorState,
    model: LTIModel,
    u_prev: float,
    y_meas,
    cfg: KalmanConfig = KalmanConfig(),
    H: Optional[np.ndarray] = None,
) -> EstimatorState:
    """One predict/update cycle; `y_meas=None` runs the prediction only.

    H defaults to reading the last state (h3).  The covariance update uses the
    Joseph form and is symmetrized afterwards.
    """
    _check_psd(est.P)
    n = model.n
    dx = est.x_hat - model.x_op
    dx = model.A @ dx + model.B[:, 0] * (u_prev - model.u_op)
    P = model.A @ est.P @ model.A.T + cfg.q * np.eye(n)
    if y_meas is not None:
        if H is None:
            H = np.zeros((1, n))
            H[0, -1] = 1.0
        y = np.atleast_1d(np.asarray(y_meas, float))
        R = cfg.r * np.eye(H.shape[0])
        S = H @ P @ H.T + R
        K = np.linalg.solve(S, H @ P).T
        dx = dx + K @ (y - H @ (model.x_op + dx))
        I_KH = np.eye(n) - K @ H
        P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return EstimatorState(model.x_op + dx, (P + P.T) / 2)


def converter_step(y_meas: float) -> np.ndarray:
    return np.array([float(y_meas)])


# -- PID -----------------------------------------------------------------------


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: Optional[float] = None


def pid_step(
    state: PidState, ref: float, y: float, gains: PidGains, T_s: float, u_max: float
) -> tuple[PidState, float]:
    """Positional PID with the integrator frozen whenever the output saturates.

    The derivative term is zero on the first call to avoid a kick.
    """
    e = ref - y
    integral = state.integral + e * T_s
    de = 0.0 if state.prev_error is None else (e - state.prev_error) / T_s
    u = gains.kp * e + gains.ki * integral + gains.kd * de
    if u > u_max or u < 0.0:
        return PidState(state.integral, e), min(max(u, 0.0), u_max)
    return PidState(integral, e), u


# -- MPC -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MpcResult:
    u: float
    sequence: np.ndarray
    kkt_residual: float
    iterations: int
    soft_constrained: bool = False


@dataclass(frozen=True, eq=False)
class MpcProblem:
    """Condensed horizon problem: predicted h3 = h_free + G @ (u - u_op)."""

    h_free: np.ndarray
    G: np.ndarray
    u_op: float
    ref: float
    u_target: float
    q: float
    r_u: float
    u_max: float
    h_max: float

    @classmethod
    def build(cls, model: LTIModel, x_hat, ref, cfg: MpcConfig, u_max, h_max, u_target=None):
        N, n = cfg.horizon, model.n
        c = np.zeros(n)
        c[-1] = 1.0
        dx0 = np.asarray(x_hat, float) - model.x_op
        h_free = np.empty(N)
        G = np.zeros((N, N))
        Ak = np.eye(n)
        impulse = []  # c A^k B
        for k in range(N):
            impulse.append(c @ Ak @ model.B[:, 0])
            Ak = model.A @ Ak
            h_free[k] = model.x_op[-1] + c @ Ak @ dx0
        for k in range(N):
            for j in range(k + 1):
                G[k, j] = impulse[k - j]
        if u_target is None:
            u_target = steady_state_input(model, ref, u_max)
        return cls(h_free, G, model.u_op, float(ref), float(u_target), cfg.q, cfg.r_u, u_max, h_max)

    def levels(self, u: np.ndarray) -> np.ndarray:
        return self.h_free + self.G @ (u - self.u_op)

    def objective(self, u: np.ndarray) -> float:
        e = self.levels(u) - self.ref
        return float(self.q * e @ e + self.r_u * np.sum((u - self.u_target) ** 2))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return 2 * self.q * self.G.T @ (self.levels(u) - self.ref) + 2 * self.r_u * (u - self.u_target)


def steady_state_input(model: LTIModel, ref: float, u_max: float) -> float:
    """Input that holds h3 at `ref` in the model's steady state, clipped to the bounds."""
    n = model.n
    try:
        dc_gain = np.linalg.solve(np.eye(n) - model.A, model.B[:, 0])[-1]
    except np.linalg.LinAlgError:
        return model.u_op
    if not np.isfinite(dc_gain) or abs(dc_gain) < 1e-15:
        return model.u_op
    return min(max(model.u_op + (ref - model.x_op[-1]) / dc_gain, 0.0), u_max)


def kkt_residual(z: np.ndarray, grad_z: np.ndarray) -> float:
    """Infinity norm of the projected-gradient map on the unit box."""
    return float(np.max(np.abs(z - np.clip(z - grad_z, 0.0, 1.0))))


def _projected_gradient(grad, L, z0, tol, max_iter):
    """Accelerated projected gradient on [0, 1]^N with gradient-based restart."""
    z = np.clip(z0, 0.0, 1.0)
    y, t = z.copy(), 1.0
    for it in range(1, max_iter + 1):
        g = grad(y)
        z_new = np.clip(y - g / L, 0.0, 1.0)
        res = kkt_residual(z_new, grad(z_new))
        if res <= tol:
            return z_new, res, it
        if g @ (z_new - z) > 0:
            t = 1.0
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = z_new + ((t - 1) / t_new) * (z_new - z)
        z, t = z_new, t_new
    return z, kkt_residual(z, grad(z)), max_iter


def mpc_step(
    model: LTIModel,
    x_hat,
    ref: float,
    cfg: MpcConfig,
    u_max: float,
    h_max: float,
    u_target: Optional[float] = None,
    allow_soft: bool = True,
) -> MpcResult:
    """First move of the box-constrained tracking problem over the horizon.

    Minimizes q*sum((h3_k - ref)^2) + r_u*sum((u_k - u_target)^2) subject to
    0 <= u_k <= u_max and h3_k <= h_max.  The decision variable is scaled to
    z = u / u_max; the level limit is enforced with an augmented Lagrangian
    around the projected-gradient solver.  `u_target` defaults to the model's
    steady-state input for `ref`.
    """
    p = MpcProblem.build(model, x_hat, ref, cfg, u_max, h_max, u_target)
    N = cfg.horizon

    # lowest reachable level at each step, per step independently
    lo = p.h_free + np.minimum(p.G * (0 - p.u_op), p.G * (u_max - p.u_op)).sum(axis=1)
    infeasible = bool(np.any(lo > h_max + 1e-12))
    if infeasible and not allow_soft:
        raise MpcInfeasibleError(f"level limit {h_max} unreachable over the horizon")

    GtG = p.G.T @ p.G
    rho = 10.0 * p.q
    lam = np.zeros(N)
    z = np.full(N, p.u_target / u_max)
    total_iter = 0
    for _ in range(50):
        def grad(zz, lam=lam):
            u = zz * u_max
            viol = np.maximum(0.0, p.levels(u) - h_max + lam / rho)
            return u_max * (p.gradient(u) + rho * p.G.T @ viol)

        hess = 2 * p.q * GtG + 2 * p.r_u * np.eye(N) + rho * GtG
        L = u_max**2 * np.linalg.eigvalsh(hess).max()
        z, res, it = _projected_gradient(grad, L, z, cfg.tol, cfg.max_iter)
        total_iter += it
        excess = p.levels(z * u_max) - h_max
        new_lam = np.maximum(0.0, lam + rho * excess)
        if np.max(excess) <= 1e-9 and (not lam.any() or np.allclose(new_lam, lam, rtol=1e-6, atol=1e-12)):
            break
        lam = new_lam
        rho = min(rho * 4, 1e8 * p.q)
    u_seq = np.clip(z * u_max, 0.0, u_max)
    soft = infeasible or bool(np.max(p.levels(u_seq) - h_max) > 1e-6)
    if soft and not allow_soft:
        raise MpcInfeasibleError(f"level limit {h_max} violated by the best admissible input")
    return MpcResult(float(u_seq[0]), u_seq, res, total_iter, soft)
