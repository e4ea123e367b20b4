"""Measurements on simulation states and energy-loss analyses.

Charge densities, single- and two-site entanglement entropies (log base 2),
mutual information, n-tangles, the heavy-hadron mass gap, and the
finite-difference energy-loss machinery with vacuum subtraction.  The
high-level ``simulate`` drives engine.evolve with a measurement plan and
collects an ObservableSeries.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .engine import (
    CompiledHamiltonian,
    FullBasis,
    StateVector,
    ground_state,
    evolve,
)
from .model import BackgroundCharges, LatticeConfig

__all__ = [
    "AnalysisError",
    "MeasurementPlan",
    "ObservableSeries",
    "EnergyLossSummary",
    "charge_density",
    "single_site_entropy",
    "two_site_entropy",
    "mutual_information",
    "entropy_profile",
    "mutual_information_matrix",
    "n_tangle",
    "n_tangle_table",
    "chiral_condensate",
    "heavy_hadron_mass",
    "de_dx",
    "lattice_averaged_de_dx",
    "symmetrized_rate",
    "delta_medium",
    "coherence_combination",
    "simulate",
    "series_to_csv",
    "ntangles_to_csv",
    "write_manifest",
]


class AnalysisError(ValueError):
    """Observable query outside its domain (grids, windows, fits)."""


# ------------------------------------------------------------ measurements


def charge_density(psi: StateVector) -> np.ndarray:
    """<q_k> per staggered site; electrons negative, positrons positive."""
    basis = psi.basis
    prob = np.abs(psi.data) ** 2
    out = np.empty(basis.n_sites)
    for k in range(basis.n_sites):
        p1 = float(prob @ basis.bit(k))
        out[k] = p1 - 1.0 if k % 2 == 0 else p1
    return out


def _entropy_bits(eigs: np.ndarray) -> float:
    eigs = eigs[eigs > 1e-14]
    return float(-(eigs @ np.log2(eigs)))


def _rho_one(psi: StateVector, n: int) -> np.ndarray:
    basis = psi.basis
    prob = np.abs(psi.data) ** 2
    p1 = float(prob @ basis.bit(n))
    if isinstance(basis, FullBasis):
        # rho_{01} = sum_rest psi(0, rest) conj(psi(1, rest))
        idx0 = np.flatnonzero(basis.bit(n) == 0)
        coh = complex(np.sum(psi.data[idx0] * np.conj(psi.data[idx0 + (1 << n)])))
    else:
        coh = 0.0  # bit flip leaves the charge sector
    return np.array([[1.0 - p1, coh], [np.conj(coh), p1]])


def single_site_entropy(psi: StateVector, n: int) -> float:
    return _entropy_bits(np.linalg.eigvalsh(_rho_one(psi, n)))


def _rho_two_full(psi: StateVector, n: int, m: int) -> np.ndarray:
    N = psi.basis.n_sites
    tensor = psi.data.reshape((2,) * N)
    ax_n, ax_m = N - 1 - n, N - 1 - m
    moved = np.moveaxis(tensor, (ax_n, ax_m), (0, 1))
    A = moved.reshape(4, -1)
    return A @ A.conj().T


def _rho_two_sector(psi: StateVector, n: int, m: int) -> np.ndarray:
    basis = psi.basis
    prob = np.abs(psi.data) ** 2
    bn = basis.bit(n).astype(bool)
    bm = basis.bit(m).astype(bool)
    p = [
        float(prob[~bn & ~bm].sum()),
        float(prob[~bn & bm].sum()),
        float(prob[bn & ~bm].sum()),
        float(prob[bn & bm].sum()),
    ]
    idx01, idx10 = basis.pair(n, m)
    # rho_{(01),(10)} = sum psi(01, rest) conj(psi(10, rest)); the aligned
    # class arrays share "rest" elementwise.
    coh = complex(np.sum(psi.data[idx01] * np.conj(psi.data[idx10])))
    rho = np.diag(p).astype(complex)
    rho[1, 2] = coh
    rho[2, 1] = np.conj(coh)
    return rho


def two_site_entropy(psi: StateVector, n: int, m: int) -> float:
    if n == m:
        raise AnalysisError("two-site entropy needs distinct sites")
    if isinstance(psi.basis, FullBasis):
        rho = _rho_two_full(psi, n, m)
    else:
        rho = _rho_two_sector(psi, n, m)
    return _entropy_bits(np.linalg.eigvalsh(rho))


def mutual_information(psi: StateVector, n: int, m: int) -> float:
    """I_nm = S_n + S_m - S_nm, in bits."""
    if n == m:
        raise AnalysisError("mutual information needs distinct sites")
    return single_site_entropy(psi, n) + single_site_entropy(psi, m) - two_site_entropy(psi, n, m)


def entropy_profile(psi: StateVector) -> np.ndarray:
    return np.array([single_site_entropy(psi, n) for n in range(psi.basis.n_sites)])


def mutual_information_matrix(psi: StateVector) -> np.ndarray:
    N = psi.basis.n_sites
    S = entropy_profile(psi)
    out = np.zeros((N, N))
    for n in range(N):
        for m in range(n + 1, N):
            val = S[n] + S[m] - two_site_entropy(psi, n, m)
            out[n, m] = out[m, n] = val
    return out


def n_tangle(psi: StateVector, sites) -> float:
    """tau = |<psi| Y...Y |psi*>|^2 over the given sites."""
    sites = sorted(set(int(s) for s in sites))
    N = psi.basis.n_sites
    if any(not 0 <= s < N for s in sites):
        raise AnalysisError(f"window {sites} outside the lattice")
    full = psi.to_full()
    tensor = full.data.reshape((2,) * N)
    axes = tuple(N - 1 - s for s in sites)
    flipped = np.flip(tensor, axis=axes)
    sign = np.ones((1,) * N)
    for ax in axes:
        shape = [1] * N
        shape[ax] = 2
        sign = sign * np.array([1.0, -1.0]).reshape(shape)
    val = np.sum(np.conj(tensor) * np.conj(flipped) * sign)
    return float(abs(val) ** 2)


def n_tangle_table(psi: StateVector, ns=None) -> list[tuple[int, int, float]]:
    """(n, i1, tau) for consecutive-site windows i_k = i1 + (k-1)."""
    N = psi.basis.n_sites
    if ns is None:
        ns = [n for n in range(2, N + 1) if n % 2 == 0]
    rows = []
    for n in ns:
        for i1 in range(0, N - n + 1):
            rows.append((n, i1, n_tangle(psi, range(i1, i1 + n))))
    return rows


def chiral_condensate(psi: StateVector) -> float:
    """Average staggered occupation (1/2L) sum_j <[(-1)^j Z_j + 1]/2>.

    Convention choice: counts deviations from the strong-coupling vacuum.
    """
    basis = psi.basis
    prob = np.abs(psi.data) ** 2
    total = 0.0
    for j in range(basis.n_sites):
        z = 1.0 - 2.0 * float(prob @ basis.bit(j))
        total += 0.5 * ((-1) ** j * z + 1.0)
    return total / basis.n_sites


def heavy_hadron_mass(
    config: LatticeConfig,
    site: int | None = None,
    Q: float = 1.0,
    lambda_bar: int | None = None,
) -> float:
    """Energy gap of one static background charge over the vacuum.

    The charged ground state is searched in the fully screening sector and in
    the neutral sector (large m/g can leave the light sector uncharged).
    """
    site = config.L - 1 if site is None else site
    charges = BackgroundCharges.from_pairs([(site, Q)])
    e_vac, _ = ground_state(config, q_tot=0, lambda_bar=lambda_bar)
    sectors = {0, -int(round(Q))}
    e_q = min(
        ground_state(config, q_tot=q, charges=charges, lambda_bar=lambda_bar)[0]
        for q in sectors
    )
    return e_q - e_vac


# ------------------------------------------------------------- energy loss


def de_dx(series: "ObservableSeries") -> np.ndarray:
    """Central-difference Delta E / Delta x; NaN where the charge is at rest."""
    E, x = series.E, series.x
    if len(E) < 3:
        raise AnalysisError("need at least 3 records for finite differences")
    rates = np.full(len(E), np.nan)
    dx = x[2:] - x[:-2]
    ok = np.abs(dx) > 1e-12
    rates[1:-1][ok] = (E[2:] - E[:-2])[ok] / dx[ok]
    if abs(x[1] - x[0]) > 1e-12:
        rates[0] = (E[1] - E[0]) / (x[1] - x[0])
    if abs(x[-1] - x[-2]) > 1e-12:
        rates[-1] = (E[-1] - E[-2]) / (x[-1] - x[-2])
    return rates


def constant_velocity_mask(series: "ObservableSeries", margin: float = 0.01) -> np.ndarray:
    v_max = series.meta.get("v_max")
    if v_max is None:
        raise AnalysisError("series carries no plateau velocity")
    return series.v >= v_max - margin


def lattice_averaged_de_dx(series: "ObservableSeries", margin: float = 0.01) -> float:
    """Least-squares slope of E(x) over the constant-velocity window."""
    mask = constant_velocity_mask(series, margin)
    if int(mask.sum()) < 3:
        raise AnalysisError("constant-velocity window shorter than 3 records")
    slope, _ = np.polyfit(series.x[mask], series.E[mask], 1)
    return float(slope)


def symmetrized_rate(series: "ObservableSeries", center: float):
    """Average of the rate at center +/- xt on the common grid of offsets."""
    rates = de_dx(series)
    x = series.x
    out_x, out_r = [], []
    order = np.argsort(np.abs(x - center))
    ic = order[0]
    for j in range(1, len(x)):
        lo, hi = ic - j, ic + j
        if lo < 0 or hi >= len(x):
            break
        if np.isnan(rates[lo]) or np.isnan(rates[hi]):
            continue
        out_x.append(0.5 * abs(x[hi] - x[lo]))
        out_r.append(0.5 * (rates[lo] + rates[hi]))
    return np.array(out_x), np.array(out_r)


def _check_matching_grids(a: "ObservableSeries", b: "ObservableSeries") -> None:
    if len(a.x) != len(b.x) or np.max(np.abs(a.x - b.x)) > 1e-9:
        raise AnalysisError("series grids differ; vacuum subtraction needs matched runs")


def delta_medium(series_med: "ObservableSeries", series_vac: "ObservableSeries") -> np.ndarray:
    """Pointwise in-medium minus in-vacuum energy-loss rate."""
    _check_matching_grids(series_med, series_vac)
    return de_dx(series_med) - de_dx(series_vac)


def coherence_combination(series_c, series_a, series_b, series_vac) -> np.ndarray:
    """Delta_C - Delta_A - Delta_B: energy loss beyond the incoherent sum."""
    dc = delta_medium(series_c, series_vac)
    da = delta_medium(series_a, series_vac)
    db = delta_medium(series_b, series_vac)
    return dc - da - db


# ------------------------------------------------------------ orchestration


@dataclass(frozen=True)
class MeasurementPlan:
    """Which optional observables to record at each step."""

    entropies: bool = False
    mutual_information: bool = False
    ntangle_ns: tuple[int, ...] = ()
    ntangle_stride: int = 1

    def wants_ntangles(self) -> bool:
        return len(self.ntangle_ns) > 0


@dataclass
class ObservableSeries:
    """Step-indexed records of a single evolution run plus run metadata."""

    records: list[dict]
    meta: dict = field(default_factory=dict)

    def _array(self, key):
        return np.array([r[key] for r in self.records])

    @property
    def t(self):
        return self._array("t")

    @property
    def x(self):
        return self._array("x")

    @property
    def v(self):
        return self._array("v")

    @property
    def E(self):
        return self._array("E")

    @property
    def charge_matrix(self):
        return np.vstack([r["q"] for r in self.records])

    def __len__(self):
        return len(self.records)


def simulate(
    config: LatticeConfig,
    schedule,
    *,
    q_tot: int | None = None,
    stepper: str = "krylov",
    dt: float | None = None,
    t_end: float | None = None,
    lambda_bar: int | None = None,
    charge_sample: str = "midpoint",
    plan: MeasurementPlan = MeasurementPlan(),
    initial: StateVector | None = None,
) -> ObservableSeries:
    """Ground state in the screening sector, then time evolution with
    measurements at every step."""
    charges0 = schedule.charges_at(0.0)
    if q_tot is None:
        q_tot = -int(round(charges0.total()))
    if initial is None:
        e0, psi0 = ground_state(config, q_tot, charges0, lambda_bar=lambda_bar)
    else:
        e0, psi0 = None, initial

    step_counter = {"n": 0}

    def observer(t, psi, ham_now):
        rec = {
            "t": t,
            "x": schedule.x_at(t),
            "v": schedule.v_at(t),
            "E": ham_now.expectation(psi),
            "norm": psi.norm(),
            "q": charge_density(psi),
        }
        if plan.entropies:
            rec["S"] = entropy_profile(psi)
        if plan.mutual_information:
            rec["I"] = mutual_information_matrix(psi)
        if plan.wants_ntangles() and step_counter["n"] % plan.ntangle_stride == 0:
            rec["ntangles"] = n_tangle_table(psi, ns=plan.ntangle_ns)
        step_counter["n"] += 1
        return rec

    records, final = evolve(
        psi0,
        config,
        schedule,
        stepper=stepper,
        dt=dt,
        t_end=t_end,
        charge_sample=charge_sample,
        lambda_bar=lambda_bar,
        observer=observer,
    )
    moving = getattr(schedule, "moving", None)
    meta = {
        "L": config.L,
        "m": config.m,
        "g": config.g,
        "q_tot": q_tot,
        "stepper": stepper,
        "dt": dt if dt is not None else schedule.default_dt(),
        "lambda_bar": lambda_bar,
        "charge_sample": charge_sample,
        "E0": e0,
        "v_max": moving.params.v_max if moving is not None else None,
    }
    series = ObservableSeries(records, meta)
    series.final_state = final
    return series


# ---------------------------------------------------------------- emitters


def series_to_csv(series: ObservableSeries, path) -> None:
    """One row per step: t, x, v, E, dE/dx, q_0.., optional S_0.. (RFC 4180)."""
    n_sites = len(series.records[0]["q"])
    rates = de_dx(series) if len(series) >= 3 else np.full(len(series), np.nan)
    with_s = "S" in series.records[0]
    header = ["t", "x", "v", "E", "dE_dx"]
    header += [f"q_{k}" for k in range(n_sites)]
    if with_s:
        header += [f"S_{k}" for k in range(n_sites)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, rec in enumerate(series.records):
            row = [
                f"{rec['t']:.10g}",
                f"{rec['x']:.12g}",
                f"{rec['v']:.12g}",
                f"{rec['E']:.14g}",
                f"{rates[j]:.14g}",
            ]
            row += [f"{q:.14g}" for q in rec["q"]]
            if with_s:
                row += [f"{s:.14g}" for s in rec["S"]]
            writer.writerow(row)


def ntangles_to_csv(series: ObservableSeries, path) -> None:
    """Rows (t, x, n, i1, tau) for every recorded n-tangle snapshot."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "n", "i1", "tau"])
        for rec in series.records:
            for n, i1, tau in rec.get("ntangles", ()):
                writer.writerow(
                    [f"{rec['t']:.10g}", f"{rec['x']:.12g}", n, i1, f"{tau:.14g}"]
                )


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def write_manifest(path, payload: dict, extra: dict | None = None) -> None:
    manifest = {
        "config_hash": config_hash(payload),
        "config": payload,
        "version": __version__,
        "seed": None,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
