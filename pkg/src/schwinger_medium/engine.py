"""Matrix-free state-vector algebra for the staggered-fermion qubit chain.

States live either in the full 2^(2L) computational basis or in a
fixed-light-charge sector (basis states with a given popcount).  All
operators of interest either preserve the bit pattern (diagonal), or flip
exactly two bits (hopping bonds and the X Z..Z Y pool strings).  For a flip
pair (a, b) the basis splits into the states with bits (0,1) and (1,0) at
(a, b); XOR-ing the pair mask shifts every member of one class by the same
constant, so the sorted classes are elementwise partners and scatter/gather
needs no searching.

No dense matrix is ever materialised outside of tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse.linalg import LinearOperator, eigsh

from .model import BackgroundCharges, ElectricForm, LatticeConfig, NO_CHARGES, PauliTermSum

__all__ = [
    "EngineError",
    "FullBasis",
    "SectorBasis",
    "StateVector",
    "CompiledOperator",
    "CompiledHamiltonian",
    "apply_operator",
    "ground_state",
    "krylov_expv",
    "trotter2_step",
    "evolve",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"SMCK"


class EngineError(RuntimeError):
    """Numerical failure in the state-vector kernel (with diagnostics)."""


# --------------------------------------------------------------------- bases


class _BasisCaches:
    """Lazy per-basis caches: bit columns, flip-pair indices, Z-string signs."""

    def __init__(self):
        self.bits = {}
        self.pairs = {}
        self.zsigns = {}


class SectorBasis:
    """All 2L-bit states with popcount L + q_tot, sorted ascending."""

    def __init__(self, L: int, q_tot: int):
        self.L = L
        self.n_sites = 2 * L
        self.q_tot = q_tot
        n_set = L + q_tot
        if not 0 <= n_set <= self.n_sites:
            raise EngineError(f"charge sector q_tot={q_tot} is empty for L={L}")
        self.n_set = n_set
        chunks = []
        block = 1 << min(self.n_sites, 24)
        for start in range(0, 1 << self.n_sites, block):
            cand = np.arange(start, start + block, dtype=np.int64)
            cand = cand[np.bitwise_count(cand) == n_set]
            chunks.append(cand)
        self.states = np.concatenate(chunks)
        self.dim = len(self.states)
        self._cache = _BasisCaches()

    def bit(self, k: int) -> np.ndarray:
        cached = self._cache.bits.get(k)
        if cached is None:
            cached = ((self.states >> k) & 1).astype(np.uint8)
            self._cache.bits[k] = cached
        return cached

    def pair(self, a: int, b: int):
        """Positions of the (bit_a, bit_b) = (0,1) and (1,0) classes, aligned.

        XOR with the pair mask adds the same constant within each class, so
        the k-th entry of one class maps to the k-th entry of the other.
        """
        if a > b:
            a, b = b, a
        key = (a, b)
        cached = self._cache.pairs.get(key)
        if cached is None:
            ba = self.bit(a)
            bb = self.bit(b)
            diff = ba != bb
            idx01 = np.flatnonzero(diff & (ba == 0)).astype(np.int64)
            idx10 = np.flatnonzero(diff & (ba == 1)).astype(np.int64)
            cached = (idx01, idx10)
            self._cache.pairs[key] = cached
        return cached

    def pair_equal(self, a: int, b: int):
        """Aligned (0,0) and (1,1) classes; these change the charge sector."""
        raise EngineError(
            "operators flipping two equal bits leave the fixed-charge sector"
        )

    def zsign(self, a: int, b: int) -> np.ndarray:
        """(-1)^(number of set bits strictly between a and b), on the (0,1) class."""
        if a > b:
            a, b = b, a
        key = (a, b)
        cached = self._cache.zsigns.get(key)
        if cached is None:
            idx01, _ = self.pair(a, b)
            interior = ((1 << b) - 1) & ~((1 << (a + 1)) - 1)
            parity = (np.bitwise_count(self.states[idx01] & interior) & 1).astype(np.int8)
            cached = (1 - 2 * parity).astype(np.int8)
            self._cache.zsigns[key] = cached
        return cached

    def index_of(self, state: int) -> int:
        pos = int(np.searchsorted(self.states, state))
        if pos >= self.dim or self.states[pos] != state:
            raise EngineError(f"basis state {state:#x} not in sector q_tot={self.q_tot}")
        return pos

    def clear_cache(self) -> None:
        self._cache = _BasisCaches()

    def describe(self) -> dict:
        return {"L": self.L, "q_tot": self.q_tot, "dim": self.dim}


class FullBasis(SectorBasis):
    """The complete 2^(2L)-dimensional computational basis."""

    def __init__(self, L: int):
        self.L = L
        self.n_sites = 2 * L
        self.q_tot = None
        self.n_set = None
        self.states = np.arange(1 << self.n_sites, dtype=np.int64)
        self.dim = len(self.states)
        self._cache = _BasisCaches()

    def index_of(self, state: int) -> int:
        if not 0 <= state < self.dim:
            raise EngineError(f"basis state {state:#x} out of range")
        return state

    def pair_equal(self, a: int, b: int):
        if a > b:
            a, b = b, a
        key = (a, b, "eq")
        cached = self._cache.pairs.get(key)
        if cached is None:
            ba = self.bit(a)
            same = ba == self.bit(b)
            idx00 = np.flatnonzero(same & (ba == 0)).astype(np.int64)
            idx11 = np.flatnonzero(same & (ba == 1)).astype(np.int64)
            cached = (idx00, idx11)
            self._cache.pairs[key] = cached
        return cached

    def describe(self) -> dict:
        return {"L": self.L, "q_tot": None, "dim": self.dim}


def charge_of_state(state: int, n_sites: int) -> int:
    """Total light charge of a basis state: popcount - L."""
    return int(state).bit_count() - n_sites // 2


# --------------------------------------------------------------------- state


class StateVector:
    """Amplitudes over a basis; normalised after every public operation."""

    __slots__ = ("basis", "data")

    def __init__(self, basis, data: np.ndarray):
        if len(data) != basis.dim:
            raise EngineError(f"dimension mismatch: {len(data)} amplitudes, basis dim {basis.dim}")
        self.basis = basis
        self.data = data

    @classmethod
    def from_basis_state(cls, basis, state: int, dtype=np.complex128) -> "StateVector":
        data = np.zeros(basis.dim, dtype=dtype)
        data[basis.index_of(state)] = 1.0
        return cls(basis, data)

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.data.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def normalize(self) -> "StateVector":
        self.data /= self.norm()
        return self

    def inner(self, other: "StateVector") -> complex:
        if self.basis is not other.basis and self.basis.describe() != other.basis.describe():
            raise EngineError("states live in different bases")
        return complex(np.vdot(self.data, other.data))

    def to_full(self) -> "StateVector":
        if isinstance(self.basis, FullBasis):
            return self
        full = FullBasis(self.basis.L)
        data = np.zeros(full.dim, dtype=np.complex128)
        data[self.basis.states] = self.data
        return StateVector(full, data)


# ----------------------------------------------------------- compiled ops


def _diagonal_of_terms(op: PauliTermSum, basis) -> np.ndarray | None:
    """Diagonal vector of const/Z/ZZ content, None when absent."""
    if op.const == 0.0 and not op.z and not op.zz:
        return None
    diag = np.full(basis.dim, op.const, dtype=np.float64)
    for k, c in op.z.items():
        diag += c * (1.0 - 2.0 * basis.bit(k).astype(np.float64))
    for (j, k), c in op.zz.items():
        zj = 1.0 - 2.0 * basis.bit(j).astype(np.float64)
        zj *= 1.0 - 2.0 * basis.bit(k).astype(np.float64)
        diag += c * zj
    return diag


class CompiledOperator:
    """A PauliTermSum bound to a basis for fast repeated application.

    Pair couplings are stored as aligned index arrays plus (possibly complex,
    possibly per-pair) amplitudes for each scatter direction.
    """

    def __init__(self, op: PauliTermSum, basis):
        self.basis = basis
        self.n_sites = op.n_sites
        if op.n_sites != basis.n_sites:
            raise EngineError("operator and basis site counts differ")
        self.diag = _diagonal_of_terms(op, basis)
        self.pairs = []  # (idx01, idx10, amp_into01, amp_into10)
        self.is_real = True
        for j, c in sorted(op.hops.items()):
            idx01, idx10 = basis.pair(j, j + 1)
            self.pairs.append((idx01, idx10, c, c))
        groups = {}
        for coeff, paulis in op.strings:
            flips = tuple((k, p) for k, p in paulis if p in "XY")
            zsites = tuple(k for k, p in paulis if p == "Z")
            if not flips:
                extra = np.full(basis.dim, coeff, dtype=np.float64)
                for k in zsites:
                    extra *= 1.0 - 2.0 * basis.bit(k).astype(np.float64)
                self.diag = extra if self.diag is None else self.diag + extra
            elif len(flips) == 2:
                key = (flips[0][0], flips[1][0], zsites)
                groups.setdefault(key, []).append((coeff, flips[0][1], flips[1][1]))
            elif isinstance(basis, FullBasis):
                self._compile_generic_full(coeff, paulis)
            else:
                raise EngineError(
                    "sector-restricted application supports diagonal and "
                    "two-bit-flip strings only"
                )
        for (a, b, zsites), members in groups.items():
            self._compile_flip_group(a, b, zsites, members)

    @staticmethod
    def _y_factor(p: str, bit: int) -> complex:
        return 1j * (1 - 2 * bit) if p == "Y" else 1.0

    def _zphase(self, zsites, idx) -> np.ndarray:
        phase = np.ones(len(idx), dtype=np.float64)
        for k in zsites:
            phase *= 1.0 - 2.0 * self.basis.bit(k)[idx].astype(np.float64)
        return phase

    def _compile_flip_group(self, a, b, zsites, members) -> None:
        """Strings sharing flip sites (a, b) and Z support.

        The Y factors are constant within a bit class, so each scatter channel
        carries one scalar amplitude times the shared Z-string phase.  The
        equal-bit channel changes the light charge; in a sector basis it must
        cancel among the group members (as it does for the charge-conserving
        pool operators), otherwise the operator leaves the sector.
        """
        basis = self.basis
        amp = {}
        for (ba, bb) in ((0, 1), (1, 0), (0, 0), (1, 1)):
            amp[(ba, bb)] = sum(
                c * self._y_factor(pa, ba) * self._y_factor(pb, bb) for c, pa, pb in members
            )
        scale = max(abs(c) for c, _, _ in members)
        sector = not isinstance(basis, FullBasis)
        if sector and max(abs(amp[(0, 0)]), abs(amp[(1, 1)])) > 1e-12 * scale:
            raise EngineError(
                f"string group on sites ({a},{b}) does not conserve charge; "
                "cannot act within a fixed sector"
            )
        idx01, idx10 = basis.pair(a, b)
        z01 = self._zphase(zsites, idx01)
        z10 = self._zphase(zsites, idx10)
        self._append_channel(idx01, idx10, amp[(1, 0)] * z10, amp[(0, 1)] * z01)
        if not sector:
            idx00, idx11 = basis.pair_equal(a, b)
            z00 = self._zphase(zsites, idx00)
            z11 = self._zphase(zsites, idx11)
            self._append_channel(idx00, idx11, amp[(1, 1)] * z11, amp[(0, 0)] * z00)

    def _append_channel(self, idx_lo, idx_hi, amp_into_lo, amp_into_hi) -> None:
        if np.max(np.abs(amp_into_lo), initial=0.0) == 0.0 and (
            np.max(np.abs(amp_into_hi), initial=0.0) == 0.0
        ):
            return
        if np.iscomplexobj(amp_into_lo) or np.iscomplexobj(amp_into_hi):
            if max(np.max(np.abs(amp_into_lo.imag), initial=0.0),
                   np.max(np.abs(amp_into_hi.imag), initial=0.0)) > 0.0:
                self.is_real = False
            else:
                amp_into_lo = amp_into_lo.real
                amp_into_hi = amp_into_hi.real
        self.pairs.append((idx_lo, idx_hi, amp_into_lo, amp_into_hi))

    def _compile_generic_full(self, coeff: float, paulis) -> None:
        basis = self.basis
        mask = 0
        phase = np.full(basis.dim, coeff, dtype=np.complex128)
        for k, p in paulis:
            bit = basis.bit(k).astype(np.float64)
            if p == "Z":
                phase *= 1.0 - 2.0 * bit
            elif p == "X":
                mask |= 1 << k
            else:  # Y
                mask |= 1 << k
                phase *= 1j * (1.0 - 2.0 * bit)
        self.is_real = False
        self.pairs.append(("xor", mask, phase, None))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = self.diag * x if self.diag is not None else np.zeros_like(x)
        if out.dtype != x.dtype:
            out = out.astype(np.result_type(out, x))
        for entry in self.pairs:
            if isinstance(entry[0], str):  # generic full-basis permutation
                _, mask, phase, _ = entry
                out = out + np.asarray(phase * x)[np.arange(len(x)) ^ mask]
                continue
            idx01, idx10, amp01, amp10 = entry
            out[idx01] += amp01 * x[idx10]
            out[idx10] += amp10 * x[idx01]
        return out

    def expectation(self, psi: StateVector) -> float:
        val = np.vdot(psi.data, self.matvec(psi.data))
        return float(val.real) if np.iscomplexobj(val) else float(val)


_COMPILE_CACHE_ATTR = "_compiled_ops"


def compile_operator(op: PauliTermSum, basis) -> CompiledOperator:
    cache = getattr(basis, _COMPILE_CACHE_ATTR, None)
    if cache is None:
        cache = {}
        setattr(basis, _COMPILE_CACHE_ATTR, cache)
    key = id(op)
    found = cache.get(key)
    if found is None or found[0] is not op:
        found = (op, CompiledOperator(op, basis))
        cache[key] = found
    return found[1]


def apply_operator(op: PauliTermSum, psi: StateVector) -> StateVector:
    """Return op|psi>, matrix-free."""
    compiled = compile_operator(op, psi.basis)
    data = psi.data
    if not compiled.is_real and not np.iscomplexobj(data):
        data = data.astype(np.complex128)
    return StateVector(psi.basis, compiled.matvec(data))


# ------------------------------------------------------- full Hamiltonian


class CompiledHamiltonian:
    """H bound to a basis, with the background-charge diagonal swappable.

    The charge-independent part of the electric diagonal (and the mass term)
    is precomputed once; set_charges only refreshes a per-site linear weight,
    so rebuilding H along a trajectory is cheap.
    """

    def __init__(self, config: LatticeConfig, basis, lambda_bar: int | None = None):
        self.config = config
        self.basis = basis
        self.lambda_bar = lambda_bar
        self.bonds = [basis.pair(j, j + 1) for j in range(config.n_sites - 1)]
        self.hop_coeff = 0.5
        self.charges = None
        self._charge_key = None
        L, m = config.L, config.m
        diag = np.zeros(basis.dim, dtype=np.float64)
        if m != 0.0:
            # H_m(b) = m [L - sum_even bit + sum_odd bit]
            diag += m * L
            for k in range(config.n_sites):
                bit = basis.bit(k).astype(np.float64)
                diag += m * (bit if k % 2 else -bit)
        if config.g != 0.0:
            self.W = ElectricForm(config, NO_CHARGES, lambda_bar).W
            diag += self._light_electric_diag()
        else:
            self.W = None
        self.diag_static = diag
        self.diag = diag
        self.set_charges(NO_CHARGES)

    def _light_vars(self):
        """Light parts of (qbar_n, delta_n) as per-cell bit combinations."""
        L = self.config.L
        basis = self.basis
        out = []
        for n in range(L):
            be = basis.bit(2 * n).astype(np.float64)
            bo = basis.bit(2 * n + 1).astype(np.float64)
            out.append(be + bo - 1.0)
        for n in range(L):
            be = basis.bit(2 * n).astype(np.float64)
            bo = basis.bit(2 * n + 1).astype(np.float64)
            out.append(be - bo - 1.0)
        return out

    def _light_electric_diag(self) -> np.ndarray:
        g2h = 0.5 * self.config.g**2
        v = self._light_vars()
        diag = np.zeros(self.basis.dim)
        nv = len(v)
        for a in range(nv):
            wa = self.W[a]
            diag += (g2h * wa[a]) * v[a] * v[a]
            for b in range(a + 1, nv):
                w = wa[b] + self.W[b, a]
                if w != 0.0:
                    diag += (g2h * w) * v[a] * v[b]
        return diag

    def set_charges(self, charges: BackgroundCharges) -> None:
        key = charges.entries
        if key == self._charge_key:
            return
        self.charges = charges
        self._charge_key = key
        if self.W is None or not charges.entries:
            self.diag = self.diag_static
            return
        cfg = self.config
        Q = charges.as_array(cfg.n_sites)
        L = cfg.L
        vq = np.concatenate([Q[0::2] + Q[1::2], Q[0::2] - Q[1::2]])
        u = cfg.g**2 * (self.W @ vq)
        const = 0.5 * cfg.g**2 * float(vq @ self.W @ vq)
        site_w = np.empty(cfg.n_sites)
        site_w[0::2] = u[:L] + u[L:]
        site_w[1::2] = u[:L] - u[L:]
        const -= float(np.sum(u[:L] + u[L:]))  # the -1 constants in both variables
        diag = np.full(self.basis.dim, const)
        for k in range(cfg.n_sites):
            if site_w[k] != 0.0:
                diag += site_w[k] * self.basis.bit(k)
        self.diag = self.diag_static + diag

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = self.diag * x
        c = self.hop_coeff
        for idx01, idx10 in self.bonds:
            out[idx01] += c * x[idx10]
            out[idx10] += c * x[idx01]
        return out

    def expectation(self, psi: StateVector) -> float:
        val = np.vdot(psi.data, self.matvec(psi.data))
        return float(val.real) if np.iscomplexobj(val) else float(val)


# ------------------------------------------------------------ eigensolver


def ground_state(
    config: LatticeConfig,
    q_tot: int,
    charges: BackgroundCharges = NO_CHARGES,
    lambda_bar: int | None = None,
    tol: float = 1e-8,
    maxiter: int | None = None,
):
    """Lowest eigenpair of H restricted to the light-charge sector q_tot.

    Returns (energy, StateVector with real float64 amplitudes).  Raises
    EngineError with the achieved residual on non-convergence.
    """
    basis = SectorBasis(config.L, q_tot)
    ham = CompiledHamiltonian(config, basis, lambda_bar)
    ham.set_charges(charges)
    if basis.dim == 1:
        psi = StateVector(basis, np.ones(1))
        return float(ham.diag[0]), psi
    op = LinearOperator((basis.dim, basis.dim), matvec=ham.matvec, dtype=np.float64)
    v0 = np.ones(basis.dim)
    v0[int(np.argmin(ham.diag))] += math.sqrt(basis.dim)
    v0 /= np.linalg.norm(v0)
    ncv = min(basis.dim - 1, 24)
    try:
        vals, vecs = eigsh(op, k=1, which="SA", v0=v0, ncv=ncv, maxiter=maxiter, tol=0)
    except Exception as exc:  # ArpackNoConvergence and friends
        raise EngineError(f"sector eigensolve failed: {exc!r}") from exc
    energy = float(vals[0])
    vec = vecs[:, 0]
    residual = float(np.linalg.norm(ham.matvec(vec) - energy * vec))
    if residual > tol:
        raise EngineError(f"ground-state residual {residual:.3e} above tolerance {tol:.1e}")
    psi = StateVector(basis, vec)
    psi.normalize()
    return energy, psi


# ---------------------------------------------------------------- steppers


def krylov_expv(matvec, data: np.ndarray, dt: float, tol: float = 1e-12, m_max: int = 30):
    """exp(-i dt H) applied by adaptive Lanczos; splits the step if needed."""
    nrm = np.linalg.norm(data)
    if nrm == 0.0:
        return data
    V = [data / nrm]
    alphas, betas = [], []
    for m in range(1, m_max + 1):
        w = matvec(V[-1])
        alpha = float(np.vdot(V[-1], w).real)
        w = w - alpha * V[-1]
        if len(V) > 1:
            w -= betas[-1] * V[-2]
        # one full re-orthogonalisation pass keeps the basis clean
        for v in V:
            w -= np.vdot(v, w) * v
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        T = np.diag(alphas).astype(np.complex128)
        for i, b in enumerate(betas):
            T[i, i + 1] = T[i + 1, i] = b
        u = expm(-1j * dt * T)[:, 0]
        err = abs(dt * beta * u[-1])
        if beta < 1e-14 or err < tol:
            out = np.zeros_like(data, dtype=np.complex128)
            for coef, v in zip(u, V):
                out += coef * v
            return out * nrm
        if m < m_max:
            betas.append(beta)
            V.append(w / beta)
    # Krylov space exhausted: halve the step.
    half = krylov_expv(matvec, data, dt / 2.0, tol, m_max)
    return krylov_expv(matvec, half, dt / 2.0, tol, m_max)


def _bond_rotation(data, idx01, idx10, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    a = data[idx01]
    b = data[idx10]
    data[idx01] = c * a - 1j * s * b
    data[idx10] = c * b - 1j * s * a


def trotter2_step(ham: CompiledHamiltonian, data: np.ndarray, dt: float) -> np.ndarray:
    """Symmetric split: diagonal, even bonds, odd bonds, even bonds, diagonal."""
    data = data * np.exp(-0.5j * dt * ham.diag)
    even = ham.bonds[0::2]
    odd = ham.bonds[1::2]
    for idx01, idx10 in even:
        _bond_rotation(data, idx01, idx10, 0.5 * dt * ham.hop_coeff)
    for idx01, idx10 in odd:
        _bond_rotation(data, idx01, idx10, dt * ham.hop_coeff)
    for idx01, idx10 in even:
        _bond_rotation(data, idx01, idx10, 0.5 * dt * ham.hop_coeff)
    data *= np.exp(-0.5j * dt * ham.diag)
    return data


def evolve(
    psi0: StateVector,
    config: LatticeConfig,
    schedule,
    *,
    stepper: str = "krylov",
    dt: float | None = None,
    t_end: float | None = None,
    charge_sample: str = "midpoint",
    lambda_bar: int | None = None,
    krylov_tol: float = 1e-12,
    norm_abort: float = 1e-8,
    observer=None,
):
    """Ordered product of step unitaries with H rebuilt from the moving charges.

    ``schedule`` provides charges_at(t) plus trajectory metadata (see
    trajectory.ChargeSchedule).  Returns (records, final_state); the default
    observer records t, x, v, energy and norm.
    """
    if stepper not in ("krylov", "trotter2"):
        raise EngineError(f"unknown stepper {stepper!r}")
    if dt is None:
        dt = schedule.default_dt()
    if t_end is None:
        t_end = schedule.default_t_end()
    if dt <= 0 or t_end <= 0:
        raise EngineError("need positive dt and t_end")
    offsets = {"start": 0.0, "midpoint": 0.5, "end": 1.0}
    if charge_sample not in offsets:
        raise EngineError(f"unknown charge sampling {charge_sample!r}")
    off = offsets[charge_sample]
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    ham = CompiledHamiltonian(config, psi0.basis, lambda_bar)

    def default_observer(t, psi, ham_now):
        return {
            "t": t,
            "x": schedule.x_at(t),
            "v": schedule.v_at(t),
            "E": ham_now.expectation(psi),
            "norm": psi.norm(),
        }

    obs = observer or default_observer
    psi = StateVector(psi0.basis, psi0.data.astype(np.complex128))
    ham.set_charges(schedule.charges_at(0.0))
    records = [obs(0.0, psi, ham)]
    for j in range(n_steps):
        t = j * dt
        ham.set_charges(schedule.charges_at(t + off * dt))
        if stepper == "krylov":
            psi.data = krylov_expv(ham.matvec, psi.data, dt, tol=krylov_tol)
        else:
            psi.data = trotter2_step(ham, psi.data, dt)
        nrm = psi.norm()
        if abs(nrm - 1.0) > norm_abort:
            raise EngineError(
                f"norm drift {abs(nrm - 1.0):.3e} at t={t + dt:g} (stepper={stepper}, dt={dt})"
            )
        psi.data /= nrm
        t_next = t + dt
        ham.set_charges(schedule.charges_at(t_next))
        records.append(obs(t_next, psi, ham))
    return records, psi


# -------------------------------------------------------------- checkpoint


def save_checkpoint(path, psi: StateVector, t: float, config: LatticeConfig, extra=None):
    """Binary amplitude dump with a JSON header."""
    header = {
        "L": psi.basis.L,
        "q_tot": psi.basis.q_tot,
        "t": t,
        "dtype": str(psi.data.dtype),
        "dim": psi.basis.dim,
        "config_hash": hashlib.sha256(
            json.dumps({"L": config.L, "m": config.m, "g": config.g}).encode()
        ).hexdigest(),
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(psi.data).tobytes())


def load_checkpoint(path):
    """Returns (StateVector, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise EngineError(f"{path} is not a state checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        data = np.frombuffer(fh.read(), dtype=np.dtype(header["dtype"])).copy()
    if header["q_tot"] is None:
        basis = FullBasis(header["L"])
    else:
        basis = SectorBasis(header["L"], header["q_tot"])
    return StateVector(basis, data), header
