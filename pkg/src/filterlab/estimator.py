"""Monte-Carlo estimation of filtered observables and eigenenergies.

The estimator never simulates the Hadamard-test ancilla: it computes the
exact overlap the interference circuit would measure and draws the two
Bernoulli outcomes (a, b) from Pr(a=0) = (1 + Re z)/2 and
Pr(b=0) = (1 + Im z)/2.  Each shot contributes

    v = scale * e^{i omega (t_i - t_j)} * d,    d = (-1)^a + i (-1)^b,

and omega enters only through this post-processing phase, so one shot set
serves an entire omega grid.

Two execution paths:

* ``sampled`` — full Monte Carlo with the fixed normalization c(mu) = 2.
  Unbiasedness at fixed c is restored by padding: each filter application is
  kept with probability mass*mu_total/2 (denominator circuits with
  mass^2*mu_total/4); discarded shots contribute a fair-coin d, which has
  zero mean but the same range, so Hoeffding budgets stay valid.
* ``analytic`` — the infinite-Bernoulli limit: exact overlaps weighted by the
  exact mass*mu_total factors.  Used to isolate LCU-construction error from
  shot noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lcu import (
    CompensationTable,
    FilterPlan,
    IdentityOp,
    TableCache,
    TermBasis,
    basis_trotter_unitary,
    make_basis,
    nu_c_actual,
    sample_x,
    segment_count,
    truncation_order,
)
from .pauli import HamiltonianSpec, PauliTerm
from .simulator import apply_pauli


class InfeasiblePlanError(ValueError):
    """The requested precision budget cannot be met (eps split collapsed)."""


class UnstableRatioError(RuntimeError):
    """Denominator estimate indistinguishable from zero; ratio withheld."""


class NoPeakError(RuntimeError):
    """No denominator peak rises above noise inside the search window."""


# ---------------------------------------------------------------------------
# plan construction
# ---------------------------------------------------------------------------

def parameter_selection(
    Delta: float,
    eta: float,
    eps: float,
    O_norm: float = 1.0,
    O_norm1: float = 1.0,
    vartheta: float = 0.1,
    k: int = 1,
    basis: str = "pauli",
    lam: float = 1.0,
    nu_mode: str = "adaptive",
    use_grid: bool = False,
) -> FilterPlan:
    """Resolve the full epsilon budget into a FilterPlan.

    eps_tau = eps_c = (1/3) eta eps / (2||O|| + 1),
    eps_n = (1/3) eta eps / (||O|| + ||O||_1 + 1),
    tau = sqrt(ln(2/eps_tau))/Delta, x_c = 2 sqrt(ln(2/eps_c)),
    N_s = 2 c^4 ||O||_1^2 eps_n^{-2} ln(1/vartheta) with c = 2.
    """
    if not (0 < eps and 0 < eta <= 1 and 0 < vartheta < 1 and Delta > 0):
        raise InfeasiblePlanError("need eps > 0, 0 < eta <= 1, 0 < vartheta < 1, Delta > 0")
    eps_tau = eta * eps / (3.0 * (2.0 * O_norm + 1.0))
    eps_c = eps_tau
    eps_n = eta * eps / (3.0 * (O_norm + O_norm1 + 1.0))
    if eps_n <= 0 or eps_tau >= 2.0:
        raise InfeasiblePlanError("epsilon budget collapsed")
    tau = math.sqrt(math.log(2.0 / eps_tau)) / Delta
    x_c = 2.0 * math.sqrt(math.log(2.0 / eps_c))
    if nu_mode == "general":
        nu_fixed = nu_c_actual(lam, Delta, eta, eps, k)
        nu_ref = nu_fixed
    elif nu_mode == "adaptive":
        nu_fixed = None
        nu_ref = segment_count(lam, tau * x_c, k)
    else:
        raise ValueError(f"unknown nu_mode {nu_mode!r}")
    s_c = truncation_order(nu_ref, eps_c, k)
    N_s = max(1, math.ceil(2.0 * 2.0 ** 4 * O_norm1 ** 2 / eps_n ** 2
                           * math.log(1.0 / vartheta)))
    grid_step = 2.0 * math.pi / (x_c + tau) if use_grid else None
    return FilterPlan(
        tau=tau, x_c=x_c, k=k, s_c=s_c,
        eps_tau=eps_tau, eps_c=eps_c, eps_n=eps_n, N_s=N_s,
        basis_name=basis, lam=lam, nu_fixed=nu_fixed, grid_step=grid_step,
    )


def amplification_factor(tau: float, kappa: float) -> float:
    """Denominator amplification g^{-2}(tau*kappa) for unknown-energy mode.

    Refuses tau*kappa > 1, where the exponential blowup voids the budget.
    """
    if tau * kappa > 1.0:
        raise InfeasiblePlanError(
            f"tau*kappa = {tau * kappa:.3g} > 1: amplification budget blows up"
        )
    return math.exp(2.0 * (tau * kappa) ** 2)


# ---------------------------------------------------------------------------
# shot records
# ---------------------------------------------------------------------------

@dataclass
class ShotRecord:
    """One Hadamard-test shot (or its analytic-limit stand-in).

    In sampled mode d_hat = (-1)^a + i(-1)^b; in analytic mode a = b = -1
    and d_hat carries the exact weighted overlap.  scale is the classical
    multiplier so that v = scale * e^{i omega (t_i - t_j)} * d_hat.
    """

    t_i: float
    t_j: float
    a: int
    b: int
    d_hat: complex
    l: int
    scale: float


@dataclass
class EstimateReport:
    N_hat: complex
    D_hat: float
    ratio: float
    stderr_N: float
    stderr_D: float
    stderr_ratio: float
    shots_N: int
    shots_D: int
    omega: float
    plan: FilterPlan
    notes: tuple[str, ...] = ()


def dump_shot_records(records, path) -> None:
    """Spec'd CSV: shot_id, t_i, t_j, re_d, im_d, l."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("shot_id,t_i,t_j,re_d,im_d,l\n")
        for i, r in enumerate(records):
            fh.write(f"{i},{r.t_i:.12g},{r.t_j:.12g},"
                     f"{r.d_hat.real:.12g},{r.d_hat.imag:.12g},{r.l}\n")


# ---------------------------------------------------------------------------
# dense per-segment engine
# ---------------------------------------------------------------------------

@dataclass
class _TableEngine:
    """Vectorized form of a compensation table for batched shot evolution.

    Bare basis unitaries are one-nonzero-per-row, so W psi is a gather plus
    a phase; rotations add a cos/sin blend with the identity.
    """

    S: np.ndarray
    gather: np.ndarray      # (R, d) int
    gphase: np.ndarray      # (R, d) complex
    theta: np.ndarray       # (R,)
    is_rot: np.ndarray      # (R,) bool
    phases: np.ndarray      # (R,) complex — plain-summand phases (rot: 1)
    probs: np.ndarray
    mu_m: float
    nu: int


class FilterSampler:
    """Binds a plan to a concrete model: tables, engines, batched evolution."""

    def __init__(self, basis: TermBasis, plan: FilterPlan):
        self.basis = basis
        self.plan = plan
        self.cache = TableCache(basis, plan.k, plan.s_c)
        self._engines: dict[float, _TableEngine] = {}

    def engine(self, t: float) -> _TableEngine:
        nu = self.plan.nu(t)
        m = round(t / nu, 14)
        if m not in self._engines:
            table = self.cache.table(m)
            d = 1 << self.basis.n
            R = len(table.ops)
            gather = np.empty((R, d), dtype=np.int64)
            gphase = np.empty((R, d), dtype=complex)
            theta = np.zeros(R)
            is_rot = np.zeros(R, dtype=bool)
            for r, op in enumerate(table.ops):
                if isinstance(op, IdentityOp):
                    w = np.eye(d, dtype=complex)
                else:
                    th = getattr(op, "theta", None)
                    if th is not None:
                        is_rot[r] = True
                        theta[r] = th
                        w = self.basis.matrix(op.key)
                    else:
                        w = op.matrix(self.basis.n)
                cols = np.argmax(np.abs(w), axis=1)
                gather[r] = cols
                gphase[r] = w[np.arange(d), cols]
            self._engines[m] = _TableEngine(
                S=basis_trotter_unitary(self.basis, m, self.plan.k),
                gather=gather, gphase=gphase, theta=theta, is_rot=is_rot,
                phases=table.phases, probs=table.probs, mu_m=table.mu_m, nu=nu,
            )
        return self._engines[m]

    def evolve_batch(self, psi0: np.ndarray, t: float, count: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """count independent sampled instances of U(t) applied to psi0.

        Returns (states with all LCU phases folded in, mu_total).
        Zero time is a no-op with mu_total = 1.
        """
        states = np.tile(psi0, (count, 1))
        if t == 0.0:
            return states, 1.0
        eng = self.engine(t)
        R = len(eng.probs)
        for _ in range(eng.nu):
            idx = rng.choice(R, size=count, p=eng.probs)
            states = states @ eng.S.T
            w = eng.gphase[idx] * np.take_along_axis(states, eng.gather[idx], axis=1)
            th = eng.theta[idx][:, None]
            out = np.cos(th) * states + 1j * np.sin(th) * w
            plain = ~eng.is_rot[idx]
            if plain.any():
                out[plain] = eng.phases[idx[plain], None] * w[plain]
            states = out
        return states, eng.mu_m ** eng.nu

    def evolve_times(self, psi0: np.ndarray, ts: np.ndarray,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Sampled evolution for a vector of times; groups equal times."""
        B = len(ts)
        states = np.empty((B, len(psi0)), dtype=complex)
        mu = np.empty(B)
        for t in np.unique(ts):
            sel = np.flatnonzero(ts == t)
            got, mu_t = self.evolve_batch(psi0, float(t), len(sel), rng)
            states[sel] = got
            mu[sel] = mu_t
        return states, mu


# ---------------------------------------------------------------------------
# shot generation
# ---------------------------------------------------------------------------

def _observable_terms(O) -> list[PauliTerm]:
    if isinstance(O, HamiltonianSpec):
        return list(O.terms)
    return list(O)


def _apply_pauli_batch(states: np.ndarray, string) -> np.ndarray:
    """P applied to every row of a (batch, 2^n) state block."""
    from .pauli import pauli_phase_on_basis
    idx = np.arange(states.shape[1])
    phase = pauli_phase_on_basis(string, idx)
    out = np.empty_like(states)
    out[:, idx ^ string.x_mask] = phase[None, :] * states
    return out


def _draw_bernoulli_d(z: np.ndarray, rng: np.random.Generator):
    """(a, b, d_hat) arrays from the two Hadamard-branch Bernoulli laws."""
    a = (rng.random(len(z)) >= (1.0 + z.real) / 2.0).astype(int)
    b = (rng.random(len(z)) >= (1.0 + z.imag) / 2.0).astype(int)
    d = (-1.0) ** a + 1j * (-1.0) ** b
    return a, b, d


def numerator_shots(sampler: FilterSampler, psi0: np.ndarray, O,
                    n_shots: int, rng: np.random.Generator,
                    mode: str = "sampled", adaptive_mu: bool = False
                    ) -> list[ShotRecord]:
    """Shots estimating N = <psi0| g O g |psi0> (omega-free; phase comes later)."""
    plan = sampler.plan
    terms = _observable_terms(O)
    norm1 = sum(abs(t.coeff) for t in terms)
    x_i = np.atleast_1d(sample_x(plan, rng, size=n_shots))
    x_j = np.atleast_1d(sample_x(plan, rng, size=n_shots))
    t_i = plan.tau * x_i
    t_j = plan.tau * x_j
    states_i, mu_i = sampler.evolve_times(psi0, t_i, rng)
    states_j, mu_j = sampler.evolve_times(psi0, t_j, rng)
    mass = plan.mass

    if mode == "analytic":
        # exact overlap with the full observable, exact LCU weights
        O_states = np.zeros_like(states_i)
        for term in terms:
            O_states += term.coeff * _apply_pauli_batch(states_i, term.string)
        z = np.einsum("bi,bi->b", states_j.conj(), O_states)
        scale = mass * mass * mu_i * mu_j
        return [
            ShotRecord(t_i[s], t_j[s], -1, -1, complex(z[s]), -1, float(scale[s]))
            for s in range(n_shots)
        ]
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")

    # importance-sample one observable term per shot
    probs = np.array([abs(t.coeff) for t in terms]) / norm1
    ls = rng.choice(len(terms), size=n_shots, p=probs)
    z = np.empty(n_shots, dtype=complex)
    for l in np.unique(ls):
        sel = np.flatnonzero(ls == l)
        term = terms[l]
        moved = _apply_pauli_batch(states_i[sel], term.string)
        z[sel] = math.copysign(1.0, term.coeff) * np.einsum(
            "bi,bi->b", states_j[sel].conj(), moved)

    if adaptive_mu:
        a, b, d = _draw_bernoulli_d(z, rng)
        scale = norm1 * mass * mass * mu_i * mu_j
    else:
        mu_f_i = mass * mu_i
        mu_f_j = mass * mu_j
        if (mu_f_i > 2.0 + 1e-9).any() or (mu_f_j > 2.0 + 1e-9).any():
            raise InfeasiblePlanError("mu_total exceeds the fixed c(mu)=2 budget")
        keep = (rng.random(n_shots) < mu_f_i / 2.0) \
            & (rng.random(n_shots) < mu_f_j / 2.0)
        z = np.where(keep, z, 0.0)   # discarded shots: fair-coin d, zero mean
        a, b, d = _draw_bernoulli_d(z, rng)
        scale = np.full(n_shots, 4.0 * norm1)
    return [
        ShotRecord(t_i[s], t_j[s], int(a[s]), int(b[s]), complex(d[s]),
                   int(ls[s]), float(scale[s]))
        for s in range(n_shots)
    ]


def denominator_shots(sampler: FilterSampler, psi0: np.ndarray,
                      n_shots: int, rng: np.random.Generator,
                      mode: str = "sampled", adaptive_mu: bool = False
                      ) -> list[ShotRecord]:
    """Shots estimating D = <psi0| g^2 |psi0>: one evolution per difference time."""
    plan = sampler.plan
    x_i = np.atleast_1d(sample_x(plan, rng, size=n_shots))
    x_j = np.atleast_1d(sample_x(plan, rng, size=n_shots))
    t_i = plan.tau * x_i
    t_j = plan.tau * x_j
    diff = np.round(t_i - t_j, 14)
    states, mu = sampler.evolve_times(psi0, diff, rng)
    z = states @ psi0.conj()
    mass = plan.mass

    if mode == "analytic":
        scale = mass * mass * mu
        return [
            ShotRecord(t_i[s], t_j[s], -1, -1, complex(z[s]), -1, float(scale[s]))
            for s in range(n_shots)
        ]
    mu_f = mass * mass * mu
    if adaptive_mu:
        a, b, d = _draw_bernoulli_d(z, rng)
        scale = mu_f
    else:
        if (mu_f > 4.0 + 1e-9).any():
            raise InfeasiblePlanError("denominator mu_total exceeds c^2 = 4")
        keep = rng.random(n_shots) < mu_f / 4.0
        z = np.where(keep, z, 0.0)
        a, b, d = _draw_bernoulli_d(z, rng)
        scale = np.full(n_shots, 4.0)
    return [
        ShotRecord(t_i[s], t_j[s], int(a[s]), int(b[s]), complex(d[s]),
                   -1, float(scale[s]))
        for s in range(n_shots)
    ]


def shoot(sampler: FilterSampler, psi0: np.ndarray, O,
          rng: np.random.Generator) -> ShotRecord:
    """Single numerator shot (the batched path with a batch of one)."""
    return numerator_shots(sampler, psi0, O, 1, rng)[0]


# ---------------------------------------------------------------------------
# accumulation
# ---------------------------------------------------------------------------

def accumulate(records: list[ShotRecord], omega: float) -> tuple[complex, float]:
    """(mean of v, scalar stderr) at post-processing frequency omega."""
    if not records:
        raise ValueError("no shot records to accumulate")
    t_i = np.array([r.t_i for r in records])
    t_j = np.array([r.t_j for r in records])
    d = np.array([r.d_hat for r in records])
    scale = np.array([r.scale for r in records])
    v = scale * np.exp(1j * omega * (t_i - t_j)) * d
    mean = complex(v.mean())
    B = len(v)
    var = (np.var(v.real) + np.var(v.imag)) / B
    return mean, math.sqrt(var)


def estimate_observable(sampler: FilterSampler, psi0: np.ndarray, O,
                        omega: float, rng: np.random.Generator,
                        mode: str = "sampled", adaptive_mu: bool = False,
                        shots: int | None = None,
                        records: tuple[list, list] | None = None
                        ) -> EstimateReport:
    """N(omega)/D(omega) with propagated statistical error.

    Raises UnstableRatioError when |D| < 10 * stderr(D).  Pass pre-generated
    (numerator, denominator) records to re-evaluate at another omega without
    new quantum cost.
    """
    n_shots = shots if shots is not None else sampler.plan.N_s
    notes = () if shots is None else (f"shot override: {n_shots}",)
    if records is None:
        rec_n = numerator_shots(sampler, psi0, O, n_shots, rng, mode, adaptive_mu)
        rec_d = denominator_shots(sampler, psi0, n_shots, rng, mode, adaptive_mu)
    else:
        rec_n, rec_d = records
    # omega stated for the full H; the basis may carry an identity shift
    omega_eff = omega - sampler.basis.energy_shift
    N_hat, se_n = accumulate(rec_n, omega_eff)
    D_mean, se_d = accumulate(rec_d, omega_eff)
    D_hat = D_mean.real
    if abs(D_hat) < 3.0 * se_d:
        raise UnstableRatioError(
            f"D = {D_hat:.3g} within 3 stderr ({se_d:.3g}) of zero")
    ratio = N_hat.real / D_hat
    se_ratio = (se_n + abs(ratio) * se_d) / abs(D_hat)
    return EstimateReport(
        N_hat=N_hat, D_hat=D_hat, ratio=ratio,
        stderr_N=se_n, stderr_D=se_d, stderr_ratio=se_ratio,
        shots_N=len(rec_n), shots_D=len(rec_d), omega=omega,
        plan=sampler.plan, notes=notes,
    )


def search_eigenenergy(sampler: FilterSampler, psi0: np.ndarray,
                       window: tuple[float, float], rng: np.random.Generator,
                       grid_spacing: float, mode: str = "sampled",
                       shots: int | None = None):
    """argmax_omega D(omega) over a uniform grid from one shared shot set."""
    lo, hi = window
    if hi <= lo:
        raise ValueError("empty search window")
    n_shots = shots if shots is not None else sampler.plan.N_s
    rec_d = denominator_shots(sampler, psi0, n_shots, rng, mode)
    omegas = np.arange(lo, hi + grid_spacing / 2, grid_spacing)
    curve = np.empty(len(omegas))
    stderr = np.empty(len(omegas))
    shift = sampler.basis.energy_shift
    for i, w in enumerate(omegas):
        mean, se = accumulate(rec_d, w - shift)
        curve[i] = mean.real
        stderr[i] = se
    best = int(np.argmax(curve))          # ties break to the lowest omega
    if curve[best] < 3.0 * stderr[best]:
        raise NoPeakError("no denominator peak above 3 stderr in the window")
    return float(omegas[best]), omegas, curve, stderr


# ---------------------------------------------------------------------------
# ancilla-free overlap estimation (symmetry basis)
# ---------------------------------------------------------------------------

def vacuum_amplitude(inst, basis: TermBasis) -> complex:
    """<vac|U|vac> for a symmetry-basis instance, classically accumulated.

    Every SWAP, Z-string, and their rotations fix |0...0> up to phase:
    signed permutations give +1 and rotations e^{i theta W} give e^{i theta}.
    """
    from .simulator import _trotter_sequence
    amp = inst.weight
    total_theta = 0.0
    for seg in inst.segments:
        if seg.comp is not None:
            theta = getattr(seg.comp, "theta", None)
            if theta is not None:               # rotation e^{i theta W}
                total_theta -= theta
        for l, frac in _trotter_sequence(len(basis.keys), seg.k):
            total_theta += frac * seg.m * basis.coeffs[l]
    return amp * complex(math.cos(total_theta), -math.sin(total_theta))


def ancilla_free_amplitude_phase(basis: TermBasis, psi0: np.ndarray, inst,
                                 rng: np.random.Generator,
                                 shots: int = 20000) -> complex:
    """Estimate A = <psi0|U|psi0> without the interference ancilla.

    Magnitude from return-probability sampling; phase from two interference
    measurements against the vacuum reference (an orthogonal particle-number
    sector, on which U acts with a classically known phase).
    """
    from .lcu import run_instance_basis
    from .pauli import _popcount
    if basis.name != "symmetry":
        raise ValueError("ancilla-free scheme requires the symmetry basis")
    idx = np.flatnonzero(np.abs(psi0) > 1e-12)
    weights = {int(_popcount(int(i))) for i in idx}
    if len(weights) != 1 or weights == {0}:
        raise ValueError("psi0 must occupy a single nonzero particle-number sector")

    u_psi = run_instance_basis(psi0, basis, inst) * inst.weight
    A = complex(np.vdot(psi0, u_psi))
    c_vac = vacuum_amplitude(inst, basis)
    if abs(abs(c_vac) - 1.0) > 1e-9:
        raise AssertionError("vacuum amplitude must be a pure phase")

    r2_hat = rng.binomial(shots, min(1.0, abs(A) ** 2)) / shots
    r_hat = math.sqrt(r2_hat)
    stderr_r = math.sqrt(max(r2_hat * (1 - r2_hat), 1e-12) / shots)
    if r_hat < 3.0 * stderr_r:
        raise UnstableRatioError("overlap magnitude below noise; phase unrecoverable")

    # interference: |c + A|^2 = 1 + |A|^2 + 2 Re(c* A); second run with iA
    p_plus = min(1.0, abs(c_vac + A) ** 2 / 4.0)
    p_imag = min(1.0, abs(c_vac + 1j * A) ** 2 / 4.0)
    est_plus = rng.binomial(shots, p_plus) / shots
    est_imag = rng.binomial(shots, p_imag) / shots
    re_ca = (4.0 * est_plus - 1.0 - r2_hat) / 2.0
    im_ca = -(4.0 * est_imag - 1.0 - r2_hat) / 2.0
    return c_vac * complex(re_ca, im_ca)
