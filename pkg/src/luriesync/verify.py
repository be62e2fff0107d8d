"""Hypothesis verification for adaptive leader-follower synchronization.

Checks every computationally decidable hypothesis of the synchronization
result: leader stability, frequency-domain positivity of the weighted
transfer function, existence of a Lyapunov certificate (H, rho) for the
decay-rate matrix inequality, coupling-strength bounds against weighted
in-degrees, matching-condition reconstruction, monotonicity of the output
nonlinearity, and the Gershgorin contraction test on the comparison matrix.

The certificate solver is dependency-free by design: the linear constraint
H B = C g is eliminated by parameterizing the affine subspace of symmetric
matrices satisfying it, and feasibility at each candidate decay rate is
sought by subgradient descent on the top eigenvalue, wrapped in bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

__all__ = [
    "PassivityCertificate",
    "FreqConditionResult",
    "MonotoneResult",
    "VerificationReport",
    "NotHurwitzError",
    "InfeasibleError",
    "default_omega_grid",
    "transfer_eval",
    "stability_degree",
    "frequency_condition_check",
    "solve_passivity_lmi",
    "condition_number",
    "coupling_bound",
    "weighted_in_degrees",
    "g_monotone_check",
    "proof_matrix_M",
    "verify_network",
]


class NotHurwitzError(ValueError):
    """The system matrix has an eigenvalue with nonnegative real part."""


class InfeasibleError(RuntimeError):
    """No certificate found within the iteration budget."""


@dataclass(frozen=True)
class PassivityCertificate:
    """Symmetric H > 0 with H A + A^T H + rho H < 0 and H B = C g."""

    H: np.ndarray
    rho: float
    g: np.ndarray
    lyapunov_margin: float
    constraint_norm: float


@dataclass(frozen=True)
class FreqConditionResult:
    """Outcome of the two frequency-domain positivity conditions."""

    ok: bool
    min_value: float
    argmin_omega: float
    second_ok: bool
    relative_degree: int
    second_mode: str


@dataclass(frozen=True)
class MonotoneResult:
    ok: bool
    worst_value: float
    worst_pair: tuple


@dataclass
class VerificationReport:
    """Aggregated hypothesis results for one network."""

    hurwitz_ok: bool
    freq_cond_ok: bool = False
    freq_min: float = math.nan
    freq_argmin_omega: float = math.nan
    relative_degree_ok: bool = False
    cert: PassivityCertificate = None
    rho_star: float = None
    lambda_star: float = None
    gamma: float = None
    rho_used: float = None
    zeta: float = None
    in_degrees: np.ndarray = None
    coupling_ok: bool = False
    matching_ok: list = field(default_factory=list)
    g_monotone_ok: bool = False
    m_matrix_ok: bool = False

    @property
    def overall_pass(self):
        return bool(self.hurwitz_ok and self.freq_cond_ok and self.relative_degree_ok
                    and self.cert is not None and self.coupling_ok
                    and all(self.matching_ok) and self.g_monotone_ok
                    and self.m_matrix_ok)


def default_omega_grid(points=2000, lo=1e-3, hi=1e4):
    """Log-spaced frequency grid with omega=0 prepended."""
    return np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), points)])


def transfer_eval(leader, s):
    """C^T (sI - A)^{-1} B at one complex point, via a linear solve."""
    n = leader.n
    M = s * np.eye(n) - leader.A
    try:
        x = np.linalg.solve(M, leader.B.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"s={s} is an eigenvalue of the system matrix") from exc
    return leader.C.T @ x


def stability_degree(A):
    """Distance of the spectrum from the imaginary axis, min |Re(eig)|."""
    ev = np.linalg.eigvals(np.asarray(A, dtype=float))
    if np.max(ev.real) >= 0:
        raise NotHurwitzError(
            f"matrix is not Hurwitz, max Re(eig) = {np.max(ev.real):.6g}")
    return float(np.min(np.abs(ev.real)))


def _weighted_transfer_polys(leader):
    """Numerator and denominator of g^T C^T (sI-A)^{-1} B, by Leverrier iteration."""
    A, B = leader.A, leader.B
    w = leader.C @ leader.g
    n = A.shape[0]
    den = np.empty(n + 1)
    den[0] = 1.0
    T = np.eye(n)
    num = np.empty(n)
    for k in range(1, n + 1):
        num[k - 1] = w @ T @ B
        AT = A @ T
        den[k] = -np.trace(AT) / k
        T = AT + den[k] * np.eye(n)
    return num, den


def _relative_degree(num, den, tol_rel=1e-9):
    """Degree gap of the rational function, ignoring numerically zero leading terms."""
    scale = np.max(np.abs(num)) if np.max(np.abs(num)) > 0 else 1.0
    lead = 0
    while lead < num.size and abs(num[lead]) <= tol_rel * scale:
        lead += 1
    if lead == num.size:
        return den.size - 1, 0.0
    return lead + 1, num[lead]


def frequency_condition_check(leader, omega_grid=None):
    """Check Re g^T chi(i w) > 0 on the grid and the high-frequency limit.

    The limit condition w^2 Re g^T chi(i w) > 0 is decided structurally
    when the transfer function has relative degree one with a positive
    leading numerator coefficient; otherwise a numeric floor at the top
    grid frequencies is used.
    """
    stability_degree(leader.A)
    if omega_grid is None:
        omega_grid = default_omega_grid()
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size == 0:
        raise ValueError("omega grid must be nonempty")
    if not np.any(omega_grid == 0.0):
        omega_grid = np.concatenate([[0.0], omega_grid])
    re = np.array([float(np.real(leader.g @ transfer_eval(leader, 1j * w)))
                   for w in omega_grid])
    k = int(np.argmin(re))
    first_ok = bool(re[k] > 0.0)

    num, den = _weighted_transfer_polys(leader)
    rel, lead_coef = _relative_degree(num, den)
    if rel == 1:
        second_ok = bool(lead_coef > 0)
        mode = "structural"
    else:
        top = omega_grid[omega_grid >= omega_grid.max() / 10.0]
        vals = top**2 * np.array(
            [float(np.real(leader.g @ transfer_eval(leader, 1j * w))) for w in top])
        second_ok = bool(np.min(vals) > 1e-9)
        mode = "numeric"
    return FreqConditionResult(ok=first_ok and second_ok, min_value=float(re[k]),
                               argmin_omega=float(omega_grid[k]), second_ok=second_ok,
                               relative_degree=rel, second_mode=mode)


def _affine_basis(B, w):
    """Particular H0 with H0 B = w, and an orthonormal basis U of B-perp.

    Symmetric H with H B = w are exactly H0 + U S U^T over symmetric S.
    """
    n = B.size
    bb = float(B @ B)
    H0 = (np.outer(w, B) + np.outer(B, w)) / bb \
        - (float(B @ w) / bb**2) * np.outer(B, B)
    Q, _ = np.linalg.qr(np.column_stack([B.reshape(-1, 1), np.eye(n)]))
    return H0, Q[:, 1:n]


def _top_eig_step(A_sh, H0, U, S, ctol):
    """Top eigenvalue of F(S) = H A_sh + A_sh^T H and a cluster subgradient."""
    H = H0 + U @ S @ U.T
    F = H @ A_sh + A_sh.T @ H
    lam, V = np.linalg.eigh(0.5 * (F + F.T))
    phi = lam[-1]
    idx = np.nonzero(lam > phi - ctol)[0]
    wts = np.exp((lam[idx] - phi) / ctol)
    wts /= wts.sum()
    G = np.zeros((U.shape[1], U.shape[1]))
    for wk, i in zip(wts, idx):
        v = V[:, i]
        a = U.T @ (A_sh @ v)
        b = U.T @ v
        G += wk * (np.outer(a, b) + np.outer(b, a))
    return phi, G


def _ls_start(A_sh, H0, U, Q):
    """Least-squares S making F(S) close to -Q; a cheap near-feasible start."""
    m = U.shape[1]
    R = -Q - (H0 @ A_sh + A_sh.T @ H0)
    cols, basis = [], []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
            M = U @ E @ U.T
            cols.append((M @ A_sh + A_sh.T @ M).ravel())
    coef, *_ = np.linalg.lstsq(np.array(cols).T, R.ravel(), rcond=None)
    S = np.zeros((m, m))
    for c, E in zip(coef, basis):
        S += c * E
    return S


def _lyap_start(A_sh, H0, U, Q):
    """Projection of a Lyapunov solution onto the constrained subspace."""
    try:
        X = solve_continuous_lyapunov(A_sh.T, -Q)
    except Exception:
        return None
    return U.T @ (0.5 * (X + X.T) - H0) @ U


def _min_top_eig(A_sh, H0, U, starts, scale, max_iter):
    """Adaptive-target subgradient descent from several restart points."""
    ctol = 1e-6 * scale
    best_phi, best_S = np.inf, None
    for S0 in starts:
        if S0 is None:
            continue
        S = S0.copy()
        phi, G = _top_eig_step(A_sh, H0, U, S, ctol)
        loc_phi, loc_S = phi, S.copy()
        delta = 0.5 * max(1e-3 * scale, abs(phi))
        stall = 0
        for _ in range(max_iter):
            gn2 = float(np.sum(G * G))
            if gn2 < 1e-30:
                break
            S = S - ((phi - (loc_phi - delta)) / gn2) * G
            phi, G = _top_eig_step(A_sh, H0, U, S, ctol)
            if phi < loc_phi - 1e-14 * scale:
                loc_phi, loc_S = phi, S.copy()
                stall = 0
            else:
                stall += 1
                if stall >= 40:
                    delta *= 0.5
                    stall = 0
                    S = loc_S.copy()
                    phi, G = _top_eig_step(A_sh, H0, U, S, ctol)
                    if delta < 1e-12 * scale:
                        break
        if loc_phi < best_phi:
            best_phi, best_S = loc_phi, loc_S
        if best_phi < -1e-9 * scale:
            break
    return best_phi, best_S


def _certify_rho(A, H0, U, rho, scale, warm, max_iter):
    """Try to make F = H A + A^T H + rho H negative definite at this rho."""
    n = A.shape[0]
    A_sh = A + 0.5 * rho * np.eye(n)
    starts = [warm,
              _ls_start(A_sh, H0, U, 0.1 * scale * np.eye(n)),
              _lyap_start(A_sh, H0, U, np.eye(n)),
              _lyap_start(A_sh, H0, U, np.diag(np.linspace(1.0, 2.0, n)))]
    return _min_top_eig(A_sh, H0, U, starts, scale, max_iter)


def solve_passivity_lmi(leader, eps=1e-6, rel_tol=1e-3, max_iter=3000):
    """Find H > eps I with H B = C g and the decay rate rho maximized.

    The equality constraint is eliminated exactly by the affine subspace
    parameterization, so constraint_norm is at machine precision. rho is
    maximized by bisection up to its hard feasibility bound 2 rho_star
    (beyond it A + rho/2 I is no longer Hurwitz, so no solution exists);
    each trial rho is certified by subgradient descent on the top
    eigenvalue, warm-started from the last feasible certificate. The
    solver is deterministic.
    """
    rho_star = stability_degree(leader.A)
    A = leader.A
    n = A.shape[0]
    w = leader.C @ leader.g
    H0, U = _affine_basis(leader.B, w)
    scale = float(np.linalg.norm(A, 2))
    guard = 1e-9 * scale
    cap = 2.0 * rho_star * (1.0 - rel_tol)

    def finish(H, rho):
        H = 0.5 * (H + H.T)
        lam_min = float(np.linalg.eigvalsh(H)[0])
        margin = float(np.linalg.eigvalsh(H @ A + A.T @ H + rho * H)[-1])
        cn = float(np.linalg.norm(H @ leader.B - w))
        if lam_min <= eps or margin >= 0:
            raise InfeasibleError(
                f"certificate failed validation at rho={rho:.6g} "
                f"(lambda_min={lam_min:.3e}, margin={margin:.3e})")
        return PassivityCertificate(H=H, rho=float(rho), g=leader.g.copy(),
                                    lyapunov_margin=margin, constraint_norm=cn)

    if U.shape[1] == 0:
        # H is fully determined by the constraint; bisect on rho directly
        H = H0

        def margin_at(r):
            return float(np.linalg.eigvalsh(H @ A + A.T @ H + r * H)[-1])

        if margin_at(0.0) >= -guard:
            raise InfeasibleError("no feasible certificate at rho=0; "
                                  "frequency conditions likely fail")
        lo, hi = 0.0, cap
        if margin_at(cap) < -guard:
            lo = cap
        else:
            while hi - lo > rel_tol * cap:
                mid = 0.5 * (lo + hi)
                if margin_at(mid) < -guard:
                    lo = mid
                else:
                    hi = mid
        return finish(H, lo)

    phi0, S0 = _certify_rho(A, H0, U, 0.0, scale, None, max_iter)
    if phi0 >= -guard:
        raise InfeasibleError("no feasible certificate at rho=0; "
                              "frequency conditions likely fail or budget exhausted")
    lo, S_lo = 0.0, S0
    phi, S = _certify_rho(A, H0, U, cap, scale, S_lo, max_iter)
    if phi < -guard:
        lo, S_lo = cap, S
    else:
        hi = cap
        while hi - lo > rel_tol * cap:
            mid = 0.5 * (lo + hi)
            phi, S = _certify_rho(A, H0, U, mid, scale, S_lo, max_iter)
            if phi < -guard:
                lo, S_lo = mid, S
            else:
                hi = mid
    return finish(H0 + U @ S_lo @ U.T, lo)


def condition_number(H):
    """Ratio of extreme eigenvalues of a symmetric positive-definite matrix."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"H must be square, got shape {H.shape}")
    if not np.allclose(H, H.T, atol=1e-10 * max(1.0, np.abs(H).max())):
        raise ValueError("H must be symmetric")
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    if lam[0] <= 0:
        raise ValueError(f"H must be positive definite, min eigenvalue {lam[0]:.3e}")
    return float(lam[-1] / lam[0])


def coupling_bound(rho_star, d, lambda_star):
    """Admissible in-degree bound gamma = rho_star / (4 d lambda_star)."""
    if rho_star <= 0 or lambda_star <= 0 or d < 1:
        raise ValueError("rho_star, lambda_star must be positive and d >= 1")
    return float(rho_star) / (4.0 * int(d) * float(lambda_star))


def weighted_in_degrees(couplings):
    """Per-node sums over incoming entries of |alpha * L|."""
    deg = np.zeros(couplings.d)
    for (i, _j), e in couplings.entries.items():
        deg[i - 1] += abs(e.alpha * e.L)
    return deg


def g_monotone_check(nl, g, sample_count=10000, sample_range=(-100.0, 100.0),
                     seed=0, tol=1e-12):
    """Decide whether (x - y) g (f(x) - f(y)) <= tol for the scalar nonlinearity.

    For piecewise-linear kinds the test is exact: every piece slope times g
    must be nonpositive. A seeded sampled test over the range plus pairs
    straddling each breakpoint backs the exact test and covers any kind.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    g = float(np.asarray(g, dtype=float).reshape(-1)[0])
    slopes = nl.slopes()
    if slopes is not None and np.any(slopes * g > tol):
        k = int(np.argmax(slopes * g))
        breaks = nl.breakpoints()
        xa = breaks[min(k, breaks.size - 1)] if breaks.size else 0.0
        pair = (float(xa), float(xa + 1.0))
        worst = (pair[1] - pair[0]) * g * (nl.value(pair[1]) - nl.value(pair[0]))
        return MonotoneResult(ok=False, worst_value=float(worst), worst_pair=pair)

    rng = np.random.default_rng(seed)
    lo, hi = sample_range
    xs = rng.uniform(lo, hi, size=sample_count)
    ys = rng.uniform(lo, hi, size=sample_count)
    breaks = nl.breakpoints()
    if breaks is not None and breaks.size:
        for db in (1e-6, 1e-3, 1.0):
            xs = np.concatenate([xs, breaks - db, breaks])
            ys = np.concatenate([ys, breaks + db, breaks + db])
    vals = (xs - ys) * g * (np.asarray(nl.value(xs)) - np.asarray(nl.value(ys)))
    k = int(np.argmax(vals))
    return MonotoneResult(ok=bool(vals[k] <= tol), worst_value=float(vals[k]),
                          worst_pair=(float(xs[k]), float(ys[k])))


def proof_matrix_M(d, zeta):
    """Comparison matrix of the interconnection bound and its Gershgorin test.

    For d >= 2 the matrix has diagonal (3d+1)/(2 zeta) and off-diagonal
    1/(2 zeta); the contraction test is the strict Gershgorin row margin
    of I - M. The single-node case needs no interconnection bound and
    returns the fixed 1x1 matrix [[0.5]] with a passing test.
    """
    if zeta <= 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    d = int(d)
    if d < 2:
        return np.array([[0.5]]), True
    M = np.full((d, d), 1.0 / (2.0 * zeta))
    np.fill_diagonal(M, (3.0 * d + 1.0) / (2.0 * zeta))
    margin = 1.0 - (3.0 * d + 1.0) / (2.0 * zeta) - (d - 1.0) / (2.0 * zeta)
    return M, bool(margin > 0.0)


def verify_network(net, g=None, omega_grid=None, eps=1e-6, matching_tol=1e-8,
                   monotone_samples=10000, seed=0, rho_safety=0.99):
    """Run every hypothesis check on a network and aggregate a report.

    Matching parameters are always reconstructed from the follower
    matrices, never taken on trust. The decay rate entering zeta is the
    certificate rho shrunk by the safety factor; gamma uses the stability
    degree directly. A network passes overall only if every hypothesis
    holds.
    """
    leader = net.leader
    g = leader.g if g is None else np.asarray(g, dtype=float).reshape(-1)
    if not np.array_equal(g, leader.g):
        from dataclasses import replace
        leader = replace(leader, g=g)
    try:
        rho_star = stability_degree(leader.A)
    except NotHurwitzError:
        return VerificationReport(hurwitz_ok=False)

    report = VerificationReport(hurwitz_ok=True, rho_star=rho_star)
    freq = frequency_condition_check(leader, omega_grid)
    report.freq_cond_ok = bool(freq.min_value > 0.0)
    report.freq_min = freq.min_value
    report.freq_argmin_omega = freq.argmin_omega
    report.relative_degree_ok = freq.second_ok

    try:
        cert = solve_passivity_lmi(leader, eps=eps)
    except InfeasibleError:
        cert = None
    report.cert = cert

    d = net.d
    report.in_degrees = weighted_in_degrees(net.couplings)
    if cert is not None:
        report.lambda_star = condition_number(cert.H)
        report.gamma = coupling_bound(rho_star, d, report.lambda_star)
        report.coupling_ok = bool(np.all(report.in_degrees < report.gamma))
        report.rho_used = rho_safety * cert.rho
        alphas = [abs(e.alpha) for e in net.couplings.entries.values()]
        alpha_max = max(alphas) if alphas else 0.0
        if alpha_max > 0.0:
            report.zeta = report.rho_used / (alpha_max * 2.0 * report.lambda_star)
        else:
            report.zeta = math.inf
        if d < 2 or alpha_max == 0.0:
            _, report.m_matrix_ok = proof_matrix_M(1, 1.0)
        else:
            _, report.m_matrix_ok = proof_matrix_M(d, report.zeta)

    ok = []
    for f in net.followers:
        try:
            verify_matching(leader, f, tol=matching_tol)
            ok.append(True)
        except MatchingError:
            ok.append(False)
    report.matching_ok = ok
    report.g_monotone_ok = g_monotone_check(
        leader.psi0, g, sample_count=monotone_samples, seed=seed).ok
    return report
