"""Domain types for leader-follower networks of Lurie-form systems.

A leader node drives d follower nodes. Each follower is a linear system
plus a shared static output nonlinearity and sparse nonlinear couplings
to other followers. Followers may be given either as raw matrices or
through matching parameters that generate them from the leader.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StaticNonlinearity",
    "ReferenceInput",
    "LeaderModel",
    "FollowerModel",
    "MatchingParams",
    "SlotAssignment",
    "CouplingFunction",
    "CouplingEntry",
    "CouplingSpec",
    "NetworkModel",
    "MatchingError",
    "follower_from_matching",
    "verify_matching",
    "eval_psi0",
    "chua_network_preset",
]

NONLINEARITY_KINDS = ("zero", "scaled_pwl_chua", "piecewise_linear", "custom_table")
COUPLING_KINDS = ("sin_diff", "lin_diff")
REFERENCE_KINDS = ("state_feedback", "constant")


class MatchingError(ValueError):
    """Follower cannot be reconciled with the leader; carries the residual."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = float(residual)


def _as_matrix(a, name):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {m.shape}")
    return m


def _as_vector(a, name):
    v = np.asarray(a, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError(f"{name} must be nonempty")
    return v


@dataclass(frozen=True)
class StaticNonlinearity:
    """Scalar static nonlinearity from a closed vocabulary of kinds.

    Kinds:
      zero                  identically 0 (any input arity)
      scaled_pwl_chua       (p/b) * (-0.5) * (m0-m1) * (|y+1| - |y-1| - 2y)
      piecewise_linear      slopes between ascending breakpoints, value 0 at y=0
      custom_table          linear interpolation through (xs, ys), linearly
                            extended beyond the table with the end slopes
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}, "
                             f"expected one of {NONLINEARITY_KINDS}")
        p = self.params
        if self.kind == "scaled_pwl_chua":
            missing = {"m0", "m1", "p", "b"} - set(p)
            if missing:
                raise ValueError(f"scaled_pwl_chua missing parameters {sorted(missing)}")
            if float(p["b"]) == 0.0:
                raise ValueError("scaled_pwl_chua requires b != 0")
        elif self.kind == "piecewise_linear":
            breaks = _as_vector(p.get("breakpoints", []), "breakpoints")
            slopes = _as_vector(p.get("slopes", []), "slopes")
            if np.any(np.diff(breaks) <= 0):
                raise ValueError("breakpoints must be strictly ascending")
            if slopes.size != breaks.size + 1:
                raise ValueError("need len(slopes) == len(breakpoints) + 1")
        elif self.kind == "custom_table":
            xs = _as_vector(p.get("xs", []), "xs")
            ys = _as_vector(p.get("ys", []), "ys")
            if xs.size != ys.size or xs.size < 2:
                raise ValueError("custom_table needs matching xs, ys with >= 2 points")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("xs must be strictly ascending")

    def value(self, y):
        """Evaluate at a scalar or an array of scalars, elementwise."""
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "scaled_pwl_chua":
            p = self.params
            c = (float(p["p"]) / float(p["b"])) * (-0.5) * (float(p["m0"]) - float(p["m1"]))
            return c * (np.abs(y + 1.0) - np.abs(y - 1.0) - 2.0 * y)
        if self.kind == "piecewise_linear":
            return self._pwl_value(y)
        xs = np.asarray(self.params["xs"], dtype=float)
        ys = np.asarray(self.params["ys"], dtype=float)
        out = np.interp(y, xs, ys)
        lo = y < xs[0]
        hi = y > xs[-1]
        s0 = (ys[1] - ys[0]) / (xs[1] - xs[0])
        s1 = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.where(lo, ys[0] + s0 * (y - xs[0]), out)
        out = np.where(hi, ys[-1] + s1 * (y - xs[-1]), out)
        return out

    def _pwl_value(self, y):
        breaks = np.asarray(self.params["breakpoints"], dtype=float)
        slopes = np.asarray(self.params["slopes"], dtype=float)
        # anchor f(0)=0, accumulate slope segments from 0 to y
        knots = np.concatenate([breaks, [0.0]])
        knots = np.unique(knots)
        vals = np.empty_like(knots)
        i0 = int(np.searchsorted(knots, 0.0))
        vals[i0] = 0.0
        for k in range(i0 + 1, knots.size):
            seg = np.searchsorted(breaks, 0.5 * (knots[k - 1] + knots[k]), side="right")
            vals[k] = vals[k - 1] + slopes[seg] * (knots[k] - knots[k - 1])
        for k in range(i0 - 1, -1, -1):
            seg = np.searchsorted(breaks, 0.5 * (knots[k] + knots[k + 1]), side="right")
            vals[k] = vals[k + 1] - slopes[seg] * (knots[k + 1] - knots[k])
        out = np.interp(y, knots, vals)
        lo = y < knots[0]
        hi = y > knots[-1]
        out = np.where(lo, vals[0] + slopes[0] * (y - knots[0]), out)
        out = np.where(hi, vals[-1] + slopes[-1] * (y - knots[-1]), out)
        return out

    def slopes(self):
        """Piece slopes for piecewise-linear kinds, None for other kinds."""
        if self.kind == "zero":
            return np.array([0.0])
        if self.kind == "scaled_pwl_chua":
            p = self.params
            s = (float(p["p"]) / float(p["b"])) * (float(p["m0"]) - float(p["m1"]))
            return np.array([s, 0.0, s])
        if self.kind == "piecewise_linear":
            return np.asarray(self.params["slopes"], dtype=float)
        if self.kind == "custom_table":
            xs = np.asarray(self.params["xs"], dtype=float)
            ys = np.asarray(self.params["ys"], dtype=float)
            return np.diff(ys) / np.diff(xs)
        return None

    def breakpoints(self):
        """Kink locations for piecewise-linear kinds."""
        if self.kind == "zero":
            return np.array([])
        if self.kind == "scaled_pwl_chua":
            return np.array([-1.0, 1.0])
        if self.kind == "piecewise_linear":
            return np.asarray(self.params["breakpoints"], dtype=float)
        if self.kind == "custom_table":
            return np.asarray(self.params["xs"], dtype=float)
        return None

    def lipschitz_constant(self):
        """Global Lipschitz constant (max absolute piece slope)."""
        return float(np.max(np.abs(self.slopes())))


@dataclass(frozen=True)
class ReferenceInput:
    """Command signal for the leader: state feedback k^T x or a constant."""

    kind: str
    gains: tuple = ()
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}, "
                             f"expected one of {REFERENCE_KINDS}")
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))

    def evaluate(self, x, t):
        """Command value given the leader state and time."""
        if self.kind == "state_feedback":
            return float(np.dot(np.asarray(self.gains), x))
        return float(self.value)


@dataclass(frozen=True)
class LeaderModel:
    """Leader node: xdot = A x + B (u_bar + psi0(y)), y = C^T x."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    psi0: StaticNonlinearity
    u_bar: ReferenceInput
    g: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_vector(self.B, "B")
        if B.size != n:
            raise ValueError(f"B has size {B.size}, expected {n}")
        if not np.any(B):
            raise ValueError("B must be nonzero")
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C.reshape(-1, 1)
        if C.shape[0] != n:
            raise ValueError(f"C has {C.shape[0]} rows, expected {n}")
        g = _as_vector(self.g, "g")
        if g.size != C.shape[1]:
            raise ValueError(f"g has size {g.size}, expected l={C.shape[1]}")
        x0 = np.zeros(n) if self.x0 is None else _as_vector(self.x0, "x0")
        if x0.size != n:
            raise ValueError(f"x0 has size {x0.size}, expected {n}")
        if self.u_bar.kind == "state_feedback" and len(self.u_bar.gains) != n:
            raise ValueError(f"u_bar gains have size {len(self.u_bar.gains)}, expected {n}")
        for name, val in (("A", A), ("B", B), ("C", C), ("g", g), ("x0", x0)):
            arr = val.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def l(self):
        return self.C.shape[1]


@dataclass(frozen=True)
class FollowerModel:
    """Follower node: xdot = A x + B u + B_L psi0(y) + coupling terms."""

    A: np.ndarray
    B: np.ndarray
    index: int = 0
    x0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_vector(self.B, "B")
        if B.size != n:
            raise ValueError(f"B has size {B.size}, expected {n}")
        x0 = np.zeros(n) if self.x0 is None else _as_vector(self.x0, "x0")
        if x0.size != n:
            raise ValueError(f"x0 has size {x0.size}, expected {n}")
        for name, val in (("A", A), ("B", B), ("x0", x0)):
            arr = val.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class MatchingParams:
    """Output-feedback gain nu and input scale theta relating a follower to the leader."""

    nu: np.ndarray
    theta: float

    def __post_init__(self):
        nu = _as_vector(self.nu, "nu")
        nu.flags.writeable = False
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "theta", float(self.theta))
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class SlotAssignment:
    """One output component of a coupling function. Indices are 1-based."""

    slot: int
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in COUPLING_KINDS:
            raise ValueError(f"unknown coupling kind {self.kind!r}, "
                             f"expected one of {COUPLING_KINDS}")
        if self.slot < 1 or self.index < 1:
            raise ValueError("slot and index are 1-based and must be >= 1")


@dataclass(frozen=True)
class CouplingFunction:
    """Structured map of a state difference v to a vector: slot k gets
    sin(v[p]) or v[p]; unassigned slots are 0."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        slots = [t.slot for t in terms]
        if len(set(slots)) != len(slots):
            raise ValueError("duplicate output slot in coupling function")
        object.__setattr__(self, "terms", terms)

    def evaluate(self, diff):
        """Apply to a state difference vector (1-based slots into 0-based array)."""
        diff = np.asarray(diff, dtype=float)
        out = np.zeros_like(diff)
        for t in self.terms:
            v = diff[t.index - 1]
            out[t.slot - 1] = np.sin(v) if t.kind == "sin_diff" else v
        return out

    def max_state_index(self):
        return max((t.index for t in self.terms), default=0)

    def max_slot(self):
        return max((t.slot for t in self.terms), default=0)


@dataclass(frozen=True)
class CouplingEntry:
    alpha: float
    phi: CouplingFunction
    L: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "L", float(self.L))
        if self.L < 0:
            raise ValueError("Lipschitz constant must be >= 0")


@dataclass(frozen=True)
class CouplingSpec:
    """Sparse directed couplings: (i, j) -> gain, function, Lipschitz bound.

    Node ids i, j are 1-based. A self pair (i, i) is rejected so the
    self coupling is identically zero.
    """

    d: int
    entries: dict

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("node count d must be >= 1")
        ent = {}
        for key, e in dict(self.entries).items():
            i, j = int(key[0]), int(key[1])
            if not (1 <= i <= self.d and 1 <= j <= self.d):
                raise ValueError(f"coupling ({i},{j}) outside 1..{self.d}")
            if i == j:
                raise ValueError(f"self coupling ({i},{i}) is not allowed")
            if not isinstance(e, CouplingEntry):
                raise ValueError(f"coupling ({i},{j}) must be a CouplingEntry")
            ent[(i, j)] = e
        object.__setattr__(self, "entries", ent)


@dataclass(frozen=True)
class NetworkModel:
    """Leader, followers, and their couplings, with consistent dimensions."""

    leader: LeaderModel
    followers: tuple
    couplings: CouplingSpec

    def __post_init__(self):
        followers = tuple(self.followers)
        object.__setattr__(self, "followers", followers)
        n = self.leader.n
        if len(followers) != self.couplings.d:
            raise ValueError(f"{len(followers)} followers but couplings declare "
                             f"d={self.couplings.d}")
        for k, f in enumerate(followers, start=1):
            if f.n != n:
                raise ValueError(f"follower {k} has n={f.n}, leader has n={n}")
        for (i, j), e in self.couplings.entries.items():
            hi = max(e.phi.max_state_index(), e.phi.max_slot())
            if hi > n:
                raise ValueError(f"coupling ({i},{j}) references state index {hi} > n={n}")

    @property
    def d(self):
        return len(self.followers)


def follower_from_matching(leader, mp, index=0):
    """Build the follower determined by matching parameters.

    Uses B_i = B_L / theta and A_i = A_L - B_i nu^T C^T, so that
    A_L = A_i + B_i nu^T C^T and B_L = theta B_i hold exactly.
    """
    if mp.theta <= 0:
        raise ValueError(f"theta must be positive, got {mp.theta}")
    if mp.nu.size != leader.l:
        raise ValueError(f"nu has size {mp.nu.size}, expected l={leader.l}")
    B_i = leader.B / mp.theta
    A_i = leader.A - np.outer(B_i, leader.C @ mp.nu)
    return FollowerModel(A=A_i, B=B_i, index=index)


def verify_matching(leader, follower, tol=1e-8):
    """Recover matching parameters (nu, theta) from raw follower matrices.

    theta is the least-squares ratio of B_L against B_i; nu is the
    least-squares fit of A_L - A_i to the rank-one structure B_i nu^T C^T.
    Raises MatchingError when the residual exceeds tol.
    """
    B_i = follower.B
    bb = float(B_i @ B_i)
    if bb == 0.0:
        raise MatchingError("follower B is zero", np.linalg.norm(leader.B))
    theta = float(B_i @ leader.B) / bb
    res_b = np.linalg.norm(leader.B - theta * B_i)
    R = leader.A - follower.A
    # vec(B_i nu^T C^T) = (C kron B_i) nu
    design = np.kron(leader.C, B_i.reshape(-1, 1))
    nu, *_ = np.linalg.lstsq(design, R.reshape(-1, order="F"), rcond=None)
    res_a = np.linalg.norm(R - np.outer(B_i, leader.C @ nu))
    residual = max(res_a, res_b)
    if residual > tol:
        raise MatchingError(
            f"no matching parameters within tol={tol:g} "
            f"(residual {residual:.3e})", residual)
    if theta <= 0:
        raise MatchingError(f"recovered theta={theta:g} is not positive", residual)
    return MatchingParams(nu=nu, theta=theta)


def eval_psi0(nl, y):
    """Evaluate a static nonlinearity at scalar output y."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if nl.kind != "zero" and y.size != 1:
        raise ValueError(f"nonlinearity kind {nl.kind!r} takes a scalar input, "
                         f"got size {y.size}")
    return float(nl.value(y[0] if y.size else 0.0))


def _chua_couplings():
    """The 13 nonzero couplings of the 5-node benchmark (1-based)."""
    alpha = {
        (1, 2): 0.0051, (1, 3): 0.1395, (1, 5): 0.1676,
        (2, 1): 0.0662, (2, 3): 0.0921, (2, 4): 0.0065,
        (3, 1): 0.2013, (3, 4): 0.2271, (3, 5): 0.1430,
        (4, 1): 0.0907, (4, 3): 0.0675,
        (5, 1): 0.0663, (5, 4): 0.2773,
    }
    shapes = {
        (1, 2): [(1, "sin_diff", 1)],
        (1, 3): [(2, "lin_diff", 2)],
        (1, 5): [(3, "sin_diff", 3)],
        (2, 1): [(1, "lin_diff", 1), (3, "lin_diff", 3)],
        (2, 3): [(2, "sin_diff", 2)],
        (2, 4): [(2, "lin_diff", 2)],
        (3, 1): [(1, "sin_diff", 1)],
        (3, 4): [(1, "sin_diff", 1)],
        (3, 5): [(1, "lin_diff", 1), (2, "lin_diff", 2), (3, "lin_diff", 3)],
        (4, 1): [(2, "sin_diff", 2)],
        (4, 3): [(1, "sin_diff", 1)],
        (5, 1): [(1, "lin_diff", 1), (3, "lin_diff", 3)],
        (5, 4): [(2, "lin_diff", 2)],
    }
    entries = {}
    for key, a in alpha.items():
        phi = CouplingFunction(tuple(SlotAssignment(*t) for t in shapes[key]))
        entries[key] = CouplingEntry(alpha=a, phi=phi, L=1.0)
    return CouplingSpec(d=5, entries=entries)


def chua_network_preset():
    """The 5-node chaotic-circuit benchmark network.

    Returns (NetworkModel, ControllerConfig, SimConfig) with the canonical
    parameters: a double-scroll leader under linear state feedback, five
    nonidentical followers generated from matching parameters, the 13
    sparse nonlinear couplings, unit adaptation gains, and a 40-unit
    horizon at dt=1e-3.

    The adaptation state starts at the matching gains. From a zero start
    the same closed loop synchronizes as well, but only after roughly
    triple the bundled horizon.
    """
    from .control import ControllerConfig
    from .sim import SimConfig

    m0, m1, p, q, b = -8.0 / 7.0, -5.0 / 7.0, 15.6, 30.0, 1.0
    A = np.array([[-1.0, 0.0, 0.0], [1.0, -1.0, 1.0], [0.0, -q, 0.0]])
    B = np.array([b, 0.0, 0.0])
    C = np.array([[1.0], [0.0], [0.0]])
    psi0 = StaticNonlinearity("scaled_pwl_chua", {"m0": m0, "m1": m1, "p": p, "b": b})
    u_bar = ReferenceInput("state_feedback",
                           gains=((-(1.0 + m0) * p + 1.0) / b, p / b, 0.0))
    leader = LeaderModel(A=A, B=B, C=C, psi0=psi0, u_bar=u_bar, g=np.array([1.0]),
                         x0=np.array([0.5, 0.0, 0.0]))

    nus = (3.0, 1.0, 4.0, 1.0, 5.0)
    x0s = ((7.0, 14.0, 0.4), (0.0, 4.0, 4.0), (1.0, -1.0, 4.5),
           (3.0, -4.0, 0.2), (2.0, 8.0, 15.0))
    followers = []
    for i, (nu, x0) in enumerate(zip(nus, x0s), start=1):
        mp = MatchingParams(nu=np.array([nu]), theta=1.0 / i)
        f = follower_from_matching(leader, mp, index=i)
        followers.append(FollowerModel(A=f.A, B=f.B, index=i, x0=np.array(x0)))

    net = NetworkModel(leader=leader, followers=tuple(followers),
                       couplings=_chua_couplings())
    tau0 = [np.array([nu, 1.0 / i]) for i, nu in enumerate(nus, start=1)]
    cfg = ControllerConfig(Gamma=[np.eye(2) for _ in range(5)],
                           g=np.array([1.0]), tau0=tau0)
    sim = SimConfig(t_end=40.0, dt=1e-3, method="rk4", record_stride=10, seed=0)
    return net, cfg, sim
