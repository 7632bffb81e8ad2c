"""Game definition: agent models, pairwise constraints, trajectory containers.

A game couples N agents over a horizon of T steps.  Each agent i owns a
state trajectory x^i (steps 1..T; step 0 is the fixed initial state), a
control trajectory u^i (steps 0..T-1), decoupled dynamics
x_{k+1}^i = f^i(x_k^i, u_k^i), a cost that may depend on every agent's
state but only its own control, and a shared pairwise inequality
h(x_k^i, x_k^j) <= 0 enforced at steps 1..T.

Array conventions (all float64):
  states      (T, N, n)   index [k-1, i] is x_k^i, k in 1..T
  controls    (T, N, m)   index [k, i]   is u_k^i, k in 0..T-1
  costates    (T, N, n)   index [k, i]   is lam_k^i, k in 0..T-1
Model evaluators broadcast over arbitrary leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class RolloutDivergenceError(RuntimeError):
    """Dynamics produced a non-finite state during rollout."""

    def __init__(self, step: int, agent: int):
        super().__init__(f"rollout diverged at step {step} for agent {agent}")
        self.step = step
        self.agent = agent


class AgentModel:
    """One agent's dynamics and cost, with analytic derivatives.

    Subclasses fix the dimensions ``n`` (state), ``m`` (control) and the
    slot ``index`` of the agent inside the joint state.  Step costs receive
    the step index ``k`` so that time-varying costs (e.g. frozen-opponent
    wrappers) can be expressed; time-invariant models ignore it.

    Gradient/Hessian layout: ``step_cost_gradients`` returns the gradient
    with respect to every agent's state block, shape (..., N, n).
    ``step_cost_hessians`` returns the own-row second-derivative blocks
    d2J/dx_own dx_j, shape (..., N, n, n), plus the (own-state, own-control)
    and (own-control, own-control) blocks.
    """

    n: int
    m: int
    index: int

    # -- dynamics ---------------------------------------------------------
    def dynamics(self, x, u):
        """x_{k+1} = f(x_k, u_k); broadcasts over leading dims."""
        raise NotImplementedError

    def dynamics_jacobians(self, x, u):
        """Return (df/dx, df/du) with shapes (..., n, n) and (..., n, m)."""
        raise NotImplementedError

    # -- step cost --------------------------------------------------------
    def step_cost(self, k, xs, u):
        """Scalar step cost; ``xs`` holds all agents' states, shape (..., N, n)."""
        raise NotImplementedError

    def step_cost_gradients(self, k, xs, u):
        """Return (dJ/dx, dJ/du) with shapes (..., N, n) and (..., m)."""
        raise NotImplementedError

    def step_cost_hessians(self, k, xs, u):
        """Return (d2J/dx_own dx_j, d2J/dx_own du, d2J/du du)."""
        raise NotImplementedError

    # -- terminal cost ----------------------------------------------------
    def terminal_cost(self, xs):
        raise NotImplementedError

    def terminal_cost_gradient(self, xs):
        """d phi/dx for every agent block, shape (..., N, n)."""
        raise NotImplementedError

    def terminal_cost_hessian(self, xs):
        """Own-row blocks d2 phi/dx_own dx_j, shape (..., N, n, n)."""
        raise NotImplementedError


class ConstraintModel:
    """Symmetric pairwise inequality h(x^i, x^j) <= 0 (feasible iff <= 0)."""

    def value(self, xi, xj):
        raise NotImplementedError

    def gradients(self, xi, xj):
        """Return (dh/dx_i, dh/dx_j), each shaped like the inputs."""
        raise NotImplementedError

    def hessians(self, xi, xj):
        """Return (d2h/dx_i dx_i, d2h/dx_i dx_j, d2h/dx_j dx_j)."""
        raise NotImplementedError


def encode_obstacle(p: int) -> int:
    """Encode frozen-obstacle index p as a negative 'other' handle."""
    return -1 - p


def decode_obstacle(j: int) -> int:
    return -1 - j


def is_obstacle(j: int) -> bool:
    return j < 0


def other_sort_key(j: int):
    """Deterministic ordering of 'other' handles: agents first, then obstacles."""
    return (0, j) if j >= 0 else (1, -1 - j)


@dataclass
class GameSpec:
    """Full game definition shared read-only by the solver machinery.

    ``initial_state`` is the joint state at step 0, shape (N, n).
    ``obstacles``, when present, holds frozen trajectories of shape
    (P, T, n) (steps 1..T) that every agent must keep h(x, obstacle) <= 0
    against; used by the interaction-ignorant MPC baseline.
    """

    agent_count: int
    horizon: int
    state_dim: int
    control_dim: int
    step_dt: float
    agents: list
    constraint: object | None
    initial_state: np.ndarray
    obstacles: np.ndarray | None = None

    def __post_init__(self):
        if self.agent_count < 1:
            raise ValueError("agent_count must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.step_dt <= 0:
            raise ValueError("step_dt must be > 0")
        if len(self.agents) != self.agent_count:
            raise ValueError("agents list length must equal agent_count")
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        if self.initial_state.size != self.agent_count * self.state_dim:
            raise ValueError("initial_state must have N*n entries")
        self.initial_state = self.initial_state.reshape(
            self.agent_count, self.state_dim
        )
        for i, a in enumerate(self.agents):
            if (a.n, a.m) != (self.state_dim, self.control_dim):
                raise ValueError(f"agent {i} dims {(a.n, a.m)} inconsistent with spec")
        if self.obstacles is not None:
            self.obstacles = np.asarray(self.obstacles, dtype=float)
            if self.obstacles.ndim == 2:
                self.obstacles = self.obstacles[None]
            P, T, n = self.obstacles.shape
            if T != self.horizon or n != self.state_dim:
                raise ValueError("obstacles must have shape (P, T, n)")

    @property
    def obstacle_count(self) -> int:
        return 0 if self.obstacles is None else self.obstacles.shape[0]

    def others(self, i: int) -> list[int]:
        """All constraint partners of agent i: other agents, then obstacles."""
        js = [j for j in range(self.agent_count) if j != i]
        js += [encode_obstacle(p) for p in range(self.obstacle_count)]
        return js

    def other_states(self, j: int, x: np.ndarray) -> np.ndarray:
        """States (T, n) of partner handle j given decision states x (T, N, n)."""
        if is_obstacle(j):
            return self.obstacles[decode_obstacle(j)]
        return x[:, j, :]


@dataclass
class Trajectory:
    """States at steps 1..T and controls at steps 0..T-1."""

    x: np.ndarray  # (T, N, n)
    u: np.ndarray  # (T, N, m)

    def copy(self) -> "Trajectory":
        return Trajectory(self.x.copy(), self.u.copy())


@dataclass
class Iterate:
    """Primal-dual point: trajectory, costates, and active-constraint duals.

    ``mu`` is keyed on (i, j, k) triplets for constraints currently in the
    active set only; j may be a negative obstacle handle.
    """

    trajectory: Trajectory
    costates: np.ndarray  # (T, N, n)
    mu: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.trajectory.x

    @property
    def u(self):
        return self.trajectory.u

    def copy(self) -> "Iterate":
        return Iterate(self.trajectory.copy(), self.costates.copy(), dict(self.mu))


def rollout(x0, u, spec: GameSpec) -> np.ndarray:
    """Integrate every agent's dynamics from x0 under controls u.

    Returns states (T, N, n) satisfying the dynamics defects exactly.
    Raises RolloutDivergenceError naming the first offending step/agent.
    """
    x0 = np.asarray(x0, dtype=float).reshape(spec.agent_count, spec.state_dim)
    u = np.asarray(u, dtype=float)
    T, N, n = spec.horizon, spec.agent_count, spec.state_dim
    x = np.empty((T, N, n))
    cur = x0
    for k in range(T):
        nxt = np.empty_like(cur)
        for i, agent in enumerate(spec.agents):
            nxt[i] = agent.dynamics(cur[i], u[k, i])
            if not np.all(np.isfinite(nxt[i])):
                raise RolloutDivergenceError(step=k + 1, agent=i)
        x[k] = nxt
        cur = nxt
    return x


def rollout_single(agent: AgentModel, x0, u) -> np.ndarray:
    """Rollout of one agent only; u (..., T, m) broadcasts over batches."""
    u = np.asarray(u, dtype=float)
    T = u.shape[-2]
    batch = u.shape[:-2]
    x = np.empty(batch + (T, agent.n))
    cur = np.broadcast_to(np.asarray(x0, dtype=float), batch + (agent.n,))
    for k in range(T):
        cur = agent.dynamics(cur, u[..., k, :])
        x[..., k, :] = cur
    return x


def full_states(spec: GameSpec, x: np.ndarray) -> np.ndarray:
    """Prepend the fixed initial state: (T+1, N, n) over steps 0..T."""
    return np.concatenate([spec.initial_state[None], x], axis=0)


@dataclass
class DerivativeReport:
    """Max relative finite-difference error per derivative block."""

    block_errors: dict

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values()) if self.block_errors else 0.0

    def __str__(self):
        lines = [f"  {name:28s} {err:.3e}" for name, err in self.block_errors.items()]
        return "\n".join(lines)


def _rel_err(analytic, fd) -> float:
    analytic = np.asarray(analytic, dtype=float)
    fd = np.asarray(fd, dtype=float)
    denom = max(np.max(np.abs(fd), initial=0.0), np.max(np.abs(analytic), initial=0.0), 1.0)
    return float(np.max(np.abs(analytic - fd), initial=0.0) / denom)


def _central_diff(f, x, eps):
    """Columns of df/dx by central differences; x flat-iterated over last axis."""
    x = np.asarray(x, dtype=float)
    cols = []
    flat_dim = x.shape[-1] if x.ndim else 1
    for idx in range(flat_dim):
        xp = x.copy()
        xm = x.copy()
        xp[..., idx] += eps
        xm[..., idx] -= eps
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * eps))
    return np.stack(cols, axis=-1)


def check_derivatives(model, point, eps: float = 1e-6) -> DerivativeReport:
    """Compare every analytic derivative of a model against central differences.

    ``point`` is (k, xs, u) for an AgentModel (arrays batched over sample
    points, xs shaped (R, N, n), u shaped (R, m)) and (xi, xj) for a
    ConstraintModel (each (R, n)).  Report only; nothing raises.
    """
    if not 1e-8 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-8, 1e-4]")
    errs = {}
    if isinstance(model, ConstraintModel):
        xi, xj = (np.asarray(a, dtype=float) for a in point)
        gi, gj = model.gradients(xi, xj)
        hii, hij, hjj = model.hessians(xi, xj)
        errs["h/xi"] = _rel_err(gi, _central_diff(lambda a: model.value(a, xj), xi, eps))
        errs["h/xj"] = _rel_err(gj, _central_diff(lambda a: model.value(xi, a), xj, eps))
        errs["h/xi/xi"] = _rel_err(
            hii, _central_diff(lambda a: model.gradients(a, xj)[0], xi, eps)
        )
        errs["h/xi/xj"] = _rel_err(
            hij, _central_diff(lambda a: model.gradients(xi, a)[0], xj, eps)
        )
        errs["h/xj/xj"] = _rel_err(
            hjj, _central_diff(lambda a: model.gradients(xi, a)[1], xj, eps)
        )
        return DerivativeReport(errs)

    k, xs, u = point
    k = np.asarray(k)
    xs = np.asarray(xs, dtype=float)
    u = np.asarray(u, dtype=float)
    own = model.index
    xo = xs[..., own, :]

    fx, fu = model.dynamics_jacobians(xo, u)
    errs["f/x"] = _rel_err(fx, _central_diff(lambda a: model.dynamics(a, u), xo, eps))
    errs["f/u"] = _rel_err(fu, _central_diff(lambda a: model.dynamics(xo, a), u, eps))

    R, N, n = xs.shape
    m = model.m

    def cost_of_flat(z):
        return model.step_cost(k, z.reshape(R, N, n), u)

    def grad_own_of_flat(z):
        return model.step_cost_gradients(k, z.reshape(R, N, n), u)[0][..., own, :]

    flat = xs.reshape(R, N * n)
    gx, gu = model.step_cost_gradients(k, xs, u)
    hxx, hxu, huu = model.step_cost_hessians(k, xs, u)
    errs["J/x"] = _rel_err(gx.reshape(R, N * n), _central_diff(cost_of_flat, flat, eps))
    errs["J/u"] = _rel_err(gu, _central_diff(lambda a: model.step_cost(k, xs, a), u, eps))
    errs["J/x/x"] = _rel_err(
        hxx.transpose(0, 2, 1, 3).reshape(R, n, N * n),
        _central_diff(grad_own_of_flat, flat, eps).reshape(R, n, N * n),
    )
    errs["J/x/u"] = _rel_err(
        hxu,
        _central_diff(
            lambda a: model.step_cost_gradients(k, xs, a)[0][..., own, :], u, eps
        ),
    )
    errs["J/u/u"] = _rel_err(
        huu, _central_diff(lambda a: model.step_cost_gradients(k, xs, a)[1], u, eps)
    )

    gphi = model.terminal_cost_gradient(xs)
    hphi = model.terminal_cost_hessian(xs)
    errs["phi/x"] = _rel_err(
        gphi.reshape(R, N * n),
        _central_diff(lambda z: model.terminal_cost(z.reshape(R, N, n)), flat, eps),
    )
    errs["phi/x/x"] = _rel_err(
        hphi.transpose(0, 2, 1, 3).reshape(R, n, N * n),
        _central_diff(
            lambda z: model.terminal_cost_gradient(z.reshape(R, N, n))[..., own, :],
            flat,
            eps,
        ).reshape(R, n, N * n),
    )
    return DerivativeReport(errs)
