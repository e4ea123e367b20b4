"""Spin Hamiltonian of single-flavor lattice QED with heavy background charges.

Staggered fermions live on N = 2L sites (electrons on even sites, positrons
on odd sites) and are mapped to qubits by a Jordan-Wigner transformation.
Site k is bit k of the computational-basis index, bit 0 least significant,
and Z_k = +1 on a cleared bit.  With the charge operator

    q_k = -(Z_k + (-1)^k) / 2

the strong-coupling vacuum (all q_k = 0) is the basis state with every even
bit set, so both the mass term and the electric term vanish on it exactly.

The Hamiltonian is

    H = H_m + H_kin + H_el
    H_m   = (m/2) sum_j [(-1)^j Z_j + 1]
    H_kin = (1/2) sum_j (sp_j sm_{j+1} + h.c.)
    H_el  = (g^2/2) sum_{j=0}^{2L-2} (sum_{k<=j} q_k + Q_k)^2

where Q_k are classical background charges entering Gauss's law.  H_el is
kept in an exact quadratic form over spatial-site charge and dipole
variables, which is also where the confinement-motivated interaction
truncation is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigurationError",
    "LatticeConfig",
    "BackgroundCharges",
    "PauliTermSum",
    "ElectricForm",
    "DispersionPoint",
    "build_hamiltonian",
    "truncate_interaction",
    "default_cutoff",
    "dispersion_energy",
    "group_velocity",
    "free_dispersion",
    "max_group_velocity",
    "strong_coupling_vacuum_index",
]


class ConfigurationError(ValueError):
    """Lattice or charge parameters outside their allowed domain."""


@dataclass(frozen=True)
class LatticeConfig:
    """Spatial sites L, bare mass m and coupling g in staggered lattice units."""

    L: int
    m: float
    g: float

    def __post_init__(self):
        if self.L < 2:
            raise ConfigurationError(f"need at least 2 spatial sites, got L={self.L}")
        if self.m < 0:
            raise ConfigurationError(f"mass must be non-negative, got m={self.m}")
        if self.g < 0:
            raise ConfigurationError(f"coupling must be non-negative, got g={self.g}")

    @property
    def n_sites(self) -> int:
        return 2 * self.L


@dataclass(frozen=True)
class BackgroundCharges:
    """Heavy external charges keyed by staggered site.

    Fractional values (from distributing a moving charge over its two
    neighbouring positron sites) enter exactly as given; no rounding.
    """

    entries: tuple[tuple[int, float], ...] = ()

    @classmethod
    def from_pairs(cls, pairs) -> "BackgroundCharges":
        return cls(tuple((int(k), float(q)) for k, q in pairs))

    def validate(self, n_sites: int) -> None:
        for k, _ in self.entries:
            if not 0 <= k < n_sites:
                raise ConfigurationError(
                    f"background charge site {k} outside staggered lattice [0, {n_sites - 1}]"
                )

    def as_array(self, n_sites: int) -> np.ndarray:
        self.validate(n_sites)
        q = np.zeros(n_sites)
        for k, val in self.entries:
            q[k] += val
        return q

    def total(self) -> float:
        return float(sum(q for _, q in self.entries))


NO_CHARGES = BackgroundCharges()

_ALLOWED_PAULIS = frozenset("XYZ")


@dataclass
class PauliTermSum:
    """Sparse real-weighted sum of Pauli strings on n_sites qubits.

    Diagonal content (identity, single-Z, ZZ) and nearest-neighbour hopping
    bonds are stored in tagged containers so the state-vector kernel can
    apply them without scanning generic strings.  ``hops[j] = c`` stands for
    c * (sp_j sm_{j+1} + h.c.) = (c/2)(X_j X_{j+1} + Y_j Y_{j+1}).  Anything
    else (e.g. the X Z..Z Y strings of the variational operator pools) goes
    into ``strings``.  All coefficients are real, so the sum is Hermitian by
    construction.
    """

    n_sites: int
    const: float = 0.0
    z: dict = field(default_factory=dict)
    zz: dict = field(default_factory=dict)
    hops: dict = field(default_factory=dict)
    strings: list = field(default_factory=list)
    charges: BackgroundCharges = NO_CHARGES
    electric: "ElectricForm | None" = None

    def add_const(self, c: float) -> None:
        self.const += c

    def add_z(self, k: int, c: float) -> None:
        if c != 0.0:
            self.z[k] = self.z.get(k, 0.0) + c

    def add_zz(self, j: int, k: int, c: float) -> None:
        if c == 0.0:
            return
        if j == k:
            raise ValueError("ZZ term needs two distinct sites")
        key = (j, k) if j < k else (k, j)
        self.zz[key] = self.zz.get(key, 0.0) + c

    def add_hop(self, j: int, c: float) -> None:
        if c != 0.0:
            self.hops[j] = self.hops.get(j, 0.0) + c

    def add_string(self, coeff: float, paulis: dict) -> None:
        coeff = float(coeff)
        if coeff == 0.0:
            return
        for site, p in paulis.items():
            if p not in _ALLOWED_PAULIS:
                raise ValueError(f"unknown Pauli label {p!r}")
            if not 0 <= site < self.n_sites:
                raise ValueError(f"site {site} outside lattice")
        self.strings.append((coeff, tuple(sorted(paulis.items()))))

    def terms(self):
        """Yield every term as (coefficient, ((site, 'X'|'Y'|'Z'), ...)).

        Hopping bonds are expanded into their XX and YY halves.
        """
        if self.const != 0.0:
            yield self.const, ()
        for k in sorted(self.z):
            yield self.z[k], ((k, "Z"),)
        for (j, k) in sorted(self.zz):
            yield self.zz[(j, k)], ((j, "Z"), (k, "Z"))
        for j in sorted(self.hops):
            c = self.hops[j]
            yield 0.5 * c, ((j, "X"), (j + 1, "X"))
            yield 0.5 * c, ((j, "Y"), (j + 1, "Y"))
        for coeff, paulis in self.strings:
            yield coeff, paulis

    @property
    def n_terms(self) -> int:
        return sum(1 for _ in self.terms())

    def is_diagonal(self) -> bool:
        return not self.hops and not self.strings

    def to_dense(self) -> np.ndarray:
        """Dense matrix in the computational basis (oracle use, small n only)."""
        if self.n_sites > 14:
            raise ValueError("dense representation limited to 14 sites")
        dim = 1 << self.n_sites
        mats = {
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.zeros((dim, dim), dtype=complex)
        for coeff, paulis in self.terms():
            term = np.array([[coeff]], dtype=complex)
            ops = dict(paulis)
            for k in range(self.n_sites - 1, -1, -1):
                term = np.kron(term, mats[ops[k]]) if k in ops else np.kron(term, np.eye(2))
            out += term
        return out


@dataclass(frozen=True)
class DispersionPoint:
    """Free-electron lattice mode: index, momentum, energy gap, group velocity."""

    nbar: int
    K: float
    E: float
    v: float


class ElectricForm:
    """Quadratic form of H_el over spatial-site variables, optionally windowed.

    Variables are ordered (qbar_0..qbar_{L-1}, delta_0..delta_{L-1}): per
    spatial cell n the total charge qbar_n = q_{2n} + q_{2n+1} + Q_{2n} +
    Q_{2n+1} and dipole delta_n = q_{2n} - q_{2n+1} + Q_{2n} - Q_{2n+1},
    background charges absorbed.  The cumulative charge on staggered link j
    is linear in these variables with no constant, so H_el = (g^2/2) v^T W v
    exactly.

    Truncation replaces each link's cumulative field by the charges within
    lambda_bar spatial cells to its left: cells further away are screened in
    the confining phase, and dropping them keeps the sum-of-squares (hence
    positive semidefinite, confining) structure.  Cross terms between cells
    separated by more than lambda_bar never appear.  The cutoff targets
    local/evolution observables; the absolute ground-state energy retains an
    extensive contribution from the clipped vacuum fluctuations.
    """

    def __init__(
        self,
        config: LatticeConfig,
        charges: BackgroundCharges,
        lambda_bar: int | None = None,
    ):
        charges.validate(config.n_sites)
        self.config = config
        self.charges = charges
        self.lambda_bar = lambda_bar
        L = config.L
        lam = L if lambda_bar is None else min(lambda_bar, L)
        nv = 2 * L
        W = np.zeros((nv, nv))
        row = np.zeros(nv)
        for n in range(L):  # even link 2n: cells n-lam..n-1 fully, half of cell n
            row[:] = 0.0
            row[max(0, n - lam) : n] = 1.0
            row[n] = 0.5
            row[L + n] = 0.5
            W += np.outer(row, row)
        for n in range(L - 1):  # odd link 2n+1: cells n-lam..n fully
            row[:] = 0.0
            row[max(0, n - lam) : n + 1] = 1.0
            W += np.outer(row, row)
        self.W = W

    def _variable_linear_forms(self):
        """Each variable as (constant, {site: z-coefficient})."""
        L = self.config.L
        Q = self.charges.as_array(self.config.n_sites)
        forms = []
        for n in range(L):  # qbar_n
            forms.append((Q[2 * n] + Q[2 * n + 1], {2 * n: -0.5, 2 * n + 1: -0.5}))
        for n in range(L):  # delta_n; the light part carries a constant -1
            forms.append((Q[2 * n] - Q[2 * n + 1] - 1.0, {2 * n: -0.5, 2 * n + 1: 0.5}))
        return forms

    def add_terms(self, h: PauliTermSum) -> None:
        """Accumulate (g^2/2) v^T W v into ``h`` as identity/Z/ZZ terms."""
        W = self.W
        forms = self._variable_linear_forms()
        pref = 0.5 * self.config.g**2
        nv = len(forms)
        for a in range(nv):
            ca, za = forms[a]
            for b in range(a, nv):
                w = W[a, b] if a == b else W[a, b] + W[b, a]
                if w == 0.0:
                    continue
                cb, zb = forms[b]
                w *= pref
                h.add_const(w * ca * cb)
                for k, x in za.items():
                    h.add_z(k, w * x * cb)
                for k, x in zb.items():
                    h.add_z(k, w * ca * x)
                for k, x in za.items():
                    for l, y in zb.items():
                        if k == l:
                            h.add_const(w * x * y)  # Z^2 = 1
                        else:
                            h.add_zz(k, l, w * x * y)


def build_hamiltonian(
    config: LatticeConfig,
    charges: BackgroundCharges = NO_CHARGES,
    lambda_bar: int | None = None,
) -> PauliTermSum:
    """Construct H = H_m + H_kin + H_el with optional interaction truncation.

    ``lambda_bar`` is the electric cutoff in spatial-site separation; ``None``
    keeps the full interaction.
    """
    charges.validate(config.n_sites)
    if lambda_bar is not None and lambda_bar < 0:
        raise ConfigurationError(f"cutoff must be non-negative, got {lambda_bar}")
    h = PauliTermSum(config.n_sites, charges=charges)
    if config.m != 0.0:
        h.add_const(config.m * config.L)
        for j in range(config.n_sites):
            h.add_z(j, 0.5 * config.m * (-1) ** j)
    for j in range(config.n_sites - 1):
        h.add_hop(j, 0.5)
    if config.g != 0.0:
        form = ElectricForm(config, charges, lambda_bar)
        form.add_terms(h)
        h.electric = form
    return h


def truncate_interaction(h: PauliTermSum, config: LatticeConfig, lambda_bar: int) -> PauliTermSum:
    """Rebuild ``h`` with electric cross terms beyond ``lambda_bar`` cells dropped."""
    if lambda_bar < 0:
        raise ConfigurationError(f"cutoff must be non-negative, got {lambda_bar}")
    if config.g != 0.0 and h.electric is None:
        raise ConfigurationError("operator carries no electric form to truncate")
    return build_hamiltonian(config, h.charges, lambda_bar=lambda_bar)


def default_cutoff(heavy_hadron_mass: float) -> int:
    """lambda_bar ~ xi/2 with the confinement length estimated as 1/Lambda-bar."""
    if heavy_hadron_mass <= 0:
        raise ConfigurationError("heavy-hadron mass must be positive")
    return math.ceil(0.5 / heavy_hadron_mass)


def dispersion_energy(m: float, K: float) -> float:
    """Free-electron gap at lattice momentum K: sqrt(m^2 + sin^2(K/2))."""
    return math.sqrt(m * m + math.sin(K / 2.0) ** 2)


def group_velocity(m: float, K: float) -> float:
    """dE/dK of the free dispersion: sin(K) / (4 sqrt(m^2 + sin^2(K/2)))."""
    return math.sin(K) / (4.0 * dispersion_energy(m, K))


def free_dispersion(config: LatticeConfig) -> list[DispersionPoint]:
    """Exact g=0 electron modes: E^2 = m^2 + sin^2(K/2), K = (n+1/2)pi/(L+1/2)."""
    points = []
    for nbar in range(config.L):
        K = (nbar + 0.5) * math.pi / (config.L + 0.5)
        points.append(
            DispersionPoint(nbar, K, dispersion_energy(config.m, K), group_velocity(config.m, K))
        )
    return points


def max_group_velocity(m: float) -> float:
    """Largest lattice group velocity, (sqrt(m^2+1) - m)/2; 1/2 at m = 0."""
    if m < 0:
        raise ConfigurationError("mass must be non-negative")
    return 0.5 * (math.sqrt(m * m + 1.0) - m)


def strong_coupling_vacuum_index(L: int) -> int:
    """Basis index of the zero-charge strong-coupling vacuum (even bits set)."""
    return sum(1 << k for k in range(0, 2 * L, 2))
