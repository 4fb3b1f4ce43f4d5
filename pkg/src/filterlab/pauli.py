"""Exact Pauli-string algebra and Hamiltonian bookkeeping.

Pauli strings are stored as paired bitmasks: bit q of ``x_mask`` is set when
qubit q carries an X or Y factor, bit q of ``z_mask`` when it carries a Z or Y
factor.  Products are O(popcount) and the global phase (a power of i) is
tracked exactly.  The convention for string text is left character = qubit 0.

The module also builds the spin models used throughout the package and the
SWAP/Z-string ("symmetry") rewriting of particle-number-conserving chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_CHAR_TO_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_TO_CHAR = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}

# phase table for single-qubit products a*b, as a power of i:
# i^t[a][b] with a, b in {I, X, Y, Z} indexed as 0..3 by (x + 2z).
# index: 0=I, 1=X, 2=Z, 3=Y  (i.e. key = x_bit + 2*z_bit)
_PHASE_POW = {
    (1, 3): 1, (3, 2): 1, (2, 1): 1,   # X*Y=iZ, Y*Z=iX, Z*X=iY
    (3, 1): 3, (2, 3): 3, (1, 2): 3,   # Y*X=-iZ, Z*Y=-iX, X*Z=-iY
}

_I_POWERS = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli string (no coefficient, no phase)."""

    n: int
    x_mask: int
    z_mask: int

    def __post_init__(self) -> None:
        full = (1 << self.n) - 1
        if self.x_mask & ~full or self.z_mask & ~full:
            raise ValueError("mask exceeds qubit count")

    @property
    def weight(self) -> int:
        """Number of non-identity sites."""
        return (self.x_mask | self.z_mask).bit_count()

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def from_text(cls, text: str) -> "PauliString":
        """Parse e.g. 'XIZY' (left char = qubit 0)."""
        x_mask = z_mask = 0
        for q, ch in enumerate(text.upper()):
            try:
                xb, zb = _CHAR_TO_BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli character {ch!r}") from None
            x_mask |= xb << q
            z_mask |= zb << q
        return cls(len(text), x_mask, z_mask)

    @classmethod
    def from_sites(cls, n: int, sites: dict[int, str]) -> "PauliString":
        """Build from a {qubit: 'X'|'Y'|'Z'} map."""
        x_mask = z_mask = 0
        for q, ch in sites.items():
            if not 0 <= q < n:
                raise ValueError(f"qubit index {q} out of range for n={n}")
            xb, zb = _CHAR_TO_BITS[ch.upper()]
            x_mask |= xb << q
            z_mask |= zb << q
        return cls(n, x_mask, z_mask)

    def to_text(self) -> str:
        return "".join(
            _BITS_TO_CHAR[((self.x_mask >> q) & 1, (self.z_mask >> q) & 1)]
            for q in range(self.n)
        )

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (test/oracle use only)."""
        dim = 1 << self.n
        idx = np.arange(dim)
        out_idx = idx ^ self.x_mask
        phase = pauli_phase_on_basis(self, idx)
        mat = np.zeros((dim, dim), dtype=complex)
        mat[out_idx, idx] = phase
        return mat

    def __str__(self) -> str:  # pragma: no cover - debugging nicety
        return self.to_text()


def pauli_phase_on_basis(p: PauliString, idx: np.ndarray | int) -> np.ndarray | complex:
    """Amplitude factor of P|b> for computational basis index/indices b.

    P|b> = i^{#Y} (-1)^{popcount(b & z_mask)} |b ^ x_mask>.
    """
    n_y = (p.x_mask & p.z_mask).bit_count()
    zpar = _popcount(np.bitwise_and(idx, p.z_mask)) & 1
    return _I_POWERS[n_y % 4] * np.where(zpar, -1.0, 1.0)


def _popcount(arr):
    """Vectorized popcount for int64 arrays (and plain ints)."""
    if isinstance(arr, (int, np.integer)):
        return int(arr).bit_count()
    try:
        # bitwise_count returns uint8; widen before arithmetic downstream
        return np.bitwise_count(arr).astype(np.int64)
    except AttributeError:  # numpy < 2.0
        out = np.zeros_like(arr)
        a = arr.copy()
        while np.any(a):
            out += a & 1
            a >>= 1
        return out


def multiply(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """Product a*b as (phase, string) with matrix(a) @ matrix(b) = phase * matrix(result).

    The phase is one of {1, i, -1, -i}.
    """
    if a.n != b.n:
        raise ValueError(f"qubit-count mismatch: {a.n} != {b.n}")
    t = multiply_masks(a.x_mask, a.z_mask, b.x_mask, b.z_mask)
    return _I_POWERS[t[0]], PauliString(a.n, t[1], t[2])


def multiply_masks(ax: int, az: int, bx: int, bz: int) -> tuple[int, int, int]:
    """Mask-level product; returns (phase power of i mod 4, x_mask, z_mask)."""
    t = 0
    overlap = (ax | az) & (bx | bz)
    m = overlap
    while m:
        q = (m & -m).bit_length() - 1
        ka = ((ax >> q) & 1) + 2 * ((az >> q) & 1)
        kb = ((bx >> q) & 1) + 2 * ((bz >> q) & 1)
        if ka and kb and ka != kb:
            # map key x+2z: 1=X, 2=Z, 3=Y
            t += _PHASE_POW[(_KEY_TO_IDX[ka], _KEY_TO_IDX[kb])]
        m &= m - 1
    return t % 4, ax ^ bx, az ^ bz


# key (x + 2z) -> cyclic index used by the phase table: X=1, Z=2, Y=3
_KEY_TO_IDX = {1: 1, 2: 2, 3: 3}


@dataclass(frozen=True)
class PauliTerm:
    """A weighted Pauli string alpha_l * P_l with real, nonzero coefficient."""

    coeff: float
    string: PauliString

    def __post_init__(self) -> None:
        if not np.isfinite(self.coeff) or self.coeff == 0.0:
            raise ValueError("term coefficient must be finite and nonzero")


@dataclass(frozen=True)
class HamiltonianStats:
    """Derived statistics of a Pauli-sum Hamiltonian."""

    L: int
    lam: float        # sum_l |alpha_l|
    Lam: float        # max_l |alpha_l|
    wt: int           # sum_l weight(P_l)
    wt_m: int         # max_l weight(P_l)
    n_L: int          # ceil(log2 L)


@dataclass(frozen=True)
class HamiltonianSpec:
    """A qubit Hamiltonian H = sum_l alpha_l P_l with cached statistics."""

    n: int
    terms: tuple[PauliTerm, ...]
    stats: HamiltonianStats = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "stats", hamiltonian_stats(self.terms))
        for t in self.terms:
            if t.string.n != self.n:
                raise ValueError("term qubit count differs from Hamiltonian n")

    def to_matrix(self) -> np.ndarray:
        mat = np.zeros((1 << self.n, 1 << self.n), dtype=complex)
        for t in self.terms:
            mat += t.coeff * t.string.to_matrix()
        return mat


def make_hamiltonian(n: int, weighted: Iterable[tuple[float, PauliString]]) -> HamiltonianSpec:
    """Build a HamiltonianSpec, merging duplicate strings and dropping zeros."""
    merged: dict[tuple[int, int], float] = {}
    order: list[tuple[int, int]] = []
    for coeff, string in weighted:
        key = (string.x_mask, string.z_mask)
        if key not in merged:
            merged[key] = 0.0
            order.append(key)
        merged[key] += float(coeff)
    terms = []
    for key in order:
        c = merged[key]
        if c != 0.0 and abs(c) > 0.0:
            terms.append(PauliTerm(c, PauliString(n, key[0], key[1])))
    if not terms:
        raise ValueError("Hamiltonian has no nonzero terms")
    return HamiltonianSpec(n, tuple(terms))


def hamiltonian_stats(terms: Sequence[PauliTerm]) -> HamiltonianStats:
    """Compute (L, lambda, Lambda, wt, wt_m, n_L) for a term list."""
    if not terms:
        raise ValueError("empty Hamiltonian")
    n = terms[0].string.n
    for t in terms:
        if t.string.n != n:
            raise ValueError("inconsistent qubit counts in term list")
        if not np.isfinite(t.coeff):
            raise ValueError("non-finite coefficient")
    L = len(terms)
    abs_c = [abs(t.coeff) for t in terms]
    weights = [t.string.weight for t in terms]
    return HamiltonianStats(
        L=L,
        lam=float(sum(abs_c)),
        Lam=float(max(abs_c)),
        wt=int(sum(weights)),
        wt_m=int(max(weights)),
        n_L=max(L - 1, 0).bit_length() if L > 1 else 0,
    )


# ---------------------------------------------------------------------------
# model builders
# ---------------------------------------------------------------------------

def build_model(name: str, n: int, params: dict | None = None) -> HamiltonianSpec:
    """Build a named spin model with canonical term ordering.

    Supported models:

    * ``tfim``: J sum_i Z_i Z_{i+1} + h sum_i X_i (params: J=1, h=1,
      periodic=False).
    * ``heisenberg_xxz``: -sum_i (J_x X X + J_y Y Y + J_z Z Z) + h_x sum X_i
      + sqrt(c^2-1) (Z_1 - Z_n), periodic chain (params: Jx=1, Jy=1, Jz=cJx,
      hx=0, c).
    * ``two_local``: sum_{i<j} X_i X_j (all pairs) + sum_i Z_i (params: J=1,
      h=1).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    params = dict(params or {})
    if name == "tfim":
        return _build_tfim(n, params)
    if name == "heisenberg_xxz":
        return _build_xxz(n, params)
    if name == "two_local":
        return _build_two_local(n, params)
    raise ValueError(f"unknown model name {name!r}")


def _bond_pairs(n: int, periodic: bool) -> list[tuple[int, int]]:
    pairs = [(i, i + 1) for i in range(n - 1)]
    if periodic:
        pairs.append((0, n - 1))
    return pairs


def _build_tfim(n: int, params: dict) -> HamiltonianSpec:
    J = float(params.pop("J", 1.0))
    h = float(params.pop("h", 1.0))
    periodic = bool(params.pop("periodic", False))
    _reject_unknown(params)
    terms: list[tuple[float, PauliString]] = []
    for i, j in _bond_pairs(n, periodic):
        terms.append((J, PauliString.from_sites(n, {i: "Z", j: "Z"})))
    for i in range(n):
        terms.append((h, PauliString.from_sites(n, {i: "X"})))
    return make_hamiltonian(n, terms)


def _build_xxz(n: int, params: dict) -> HamiltonianSpec:
    Jx = float(params.pop("Jx", 1.0))
    Jy = float(params.pop("Jy", Jx))
    c = float(params.pop("c", params.pop("Jz", 1.0) / Jx if "Jz" in params else 1.0))
    Jz = float(params.pop("Jz", c * Jx))
    hx = float(params.pop("hx", 0.0))
    _reject_unknown(params)
    if c < 1.0:
        raise ValueError("anisotropy c must be >= 1 (boundary term sqrt(c^2-1))")
    terms: list[tuple[float, PauliString]] = []
    for i, j in _bond_pairs(n, periodic=True):
        terms.append((-Jx, PauliString.from_sites(n, {i: "X", j: "X"})))
        terms.append((-Jy, PauliString.from_sites(n, {i: "Y", j: "Y"})))
        terms.append((-Jz, PauliString.from_sites(n, {i: "Z", j: "Z"})))
    for i in range(n):
        if hx != 0.0:
            terms.append((hx, PauliString.from_sites(n, {i: "X"})))
    bc = np.sqrt(c * c - 1.0)
    if bc != 0.0:
        terms.append((bc, PauliString.from_sites(n, {0: "Z"})))
        terms.append((-bc, PauliString.from_sites(n, {n - 1: "Z"})))
    return make_hamiltonian(n, terms)


def _build_two_local(n: int, params: dict) -> HamiltonianSpec:
    J = float(params.pop("J", 1.0))
    h = float(params.pop("h", 1.0))
    _reject_unknown(params)
    terms: list[tuple[float, PauliString]] = []
    for i in range(n):
        for j in range(i + 1, n):
            terms.append((J, PauliString.from_sites(n, {i: "X", j: "X"})))
    for i in range(n):
        terms.append((h, PauliString.from_sites(n, {i: "Z"})))
    return make_hamiltonian(n, terms)


def _reject_unknown(params: dict) -> None:
    if params:
        raise ValueError(f"unknown model parameters: {sorted(params)}")


# ---------------------------------------------------------------------------
# Hamiltonian file format: one `coeff pauli_string` per line, '#' comments
# ---------------------------------------------------------------------------

class HamiltonianParseError(ValueError):
    """Raised on malformed Hamiltonian files; carries the offending line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_hamiltonian_lines(lines: Iterable[str]) -> HamiltonianSpec:
    weighted: list[tuple[float, PauliString]] = []
    n = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise HamiltonianParseError(lineno, "expected `coeff pauli_string`")
        try:
            coeff = float(fields[0])
        except ValueError:
            raise HamiltonianParseError(lineno, f"bad coefficient {fields[0]!r}") from None
        try:
            string = PauliString.from_text(fields[1])
        except ValueError as exc:
            raise HamiltonianParseError(lineno, str(exc)) from None
        if n is None:
            n = string.n
        elif string.n != n:
            raise HamiltonianParseError(lineno, f"string length {string.n} != {n}")
        weighted.append((coeff, string))
    if not weighted:
        raise HamiltonianParseError(0, "no terms found")
    return make_hamiltonian(n, weighted)


def load_hamiltonian(path) -> HamiltonianSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hamiltonian_lines(fh)


# ---------------------------------------------------------------------------
# SWAP / Z-string ("symmetry") basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryBasisTerm:
    """A Hamiltonian term that commutes with the total-Z operator.

    kind is one of "swap" (sites = (i, j)), "zstring" (sites = support
    tuple) or "identity".
    """

    kind: str
    sites: tuple[int, ...]
    coeff: float

    def __post_init__(self) -> None:
        if self.kind not in ("swap", "zstring", "identity"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "swap" and len(self.sites) != 2:
            raise ValueError("swap term needs exactly two sites")

    def to_matrix(self, n: int) -> np.ndarray:
        dim = 1 << n
        idx = np.arange(dim)
        if self.kind == "identity":
            return self.coeff * np.eye(dim, dtype=complex)
        if self.kind == "swap":
            i, j = self.sites
            bi = (idx >> i) & 1
            bj = (idx >> j) & 1
            out_idx = np.where(bi != bj, idx ^ ((1 << i) | (1 << j)), idx)
            mat = np.zeros((dim, dim), dtype=complex)
            mat[out_idx, idx] = self.coeff
            return mat
        zmask = 0
        for q in self.sites:
            zmask |= 1 << q
        sign = np.where(_popcount(np.bitwise_and(idx, zmask)) & 1, -1.0, 1.0)
        return self.coeff * np.diag(sign).astype(complex)


def to_symmetry_basis(H: HamiltonianSpec) -> list[SymmetryBasisTerm]:
    """Rewrite H as SWAP and Z-string terms (identity component dropped).

    Requires every XX term to be matched by a YY term with the same
    coefficient on the same pair of sites; then

        J (X_i X_j + Y_i Y_j) = 2J SWAP(i,j) - J I - J Z_i Z_j.

    Raises ValueError when H is not expressible in this basis.
    """
    n = H.n
    xx: dict[tuple[int, int], float] = {}
    yy: dict[tuple[int, int], float] = {}
    zz: dict[tuple[int, ...], float] = {}
    for term in H.terms:
        s = term.string
        y_mask = s.x_mask & s.z_mask
        x_only = s.x_mask & ~s.z_mask
        z_only = s.z_mask & ~s.x_mask
        support = tuple(q for q in range(n) if (s.x_mask | s.z_mask) >> q & 1)
        if x_only and not y_mask and not z_only and len(support) == 2:
            xx[support] = xx.get(support, 0.0) + term.coeff
        elif y_mask and not x_only and not z_only and len(support) == 2:
            yy[support] = yy.get(support, 0.0) + term.coeff
        elif not s.x_mask:  # pure Z string (or identity)
            zz[support] = zz.get(support, 0.0) + term.coeff
        else:
            raise ValueError(
                f"term {s.to_text()} not expressible in the SWAP/Z-string basis"
            )
    if set(xx) != set(yy):
        raise ValueError("unpaired XX/YY terms; Hamiltonian not number-conserving")
    out: list[SymmetryBasisTerm] = []
    for pair in sorted(xx):
        if abs(xx[pair] - yy[pair]) > 1e-12 * max(1.0, abs(xx[pair])):
            raise ValueError(f"XX and YY coefficients differ on sites {pair}")
        J = xx[pair]
        # J(XX + YY) = 2J SWAP - J I - J ZZ; identity is dropped.
        out.append(SymmetryBasisTerm("swap", pair, 2.0 * J))
        zz[pair] = zz.get(pair, 0.0) - J
    for support in sorted(zz):
        c = zz[support]
        if support == () or c == 0.0:
            continue  # identity/zero terms dropped
        out.append(SymmetryBasisTerm("zstring", support, c))
    return out


def symmetry_terms_matrix(terms: Sequence[SymmetryBasisTerm], n: int) -> np.ndarray:
    mat = np.zeros((1 << n, 1 << n), dtype=complex)
    for t in terms:
        mat += t.to_matrix(n)
    return mat
