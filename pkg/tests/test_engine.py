import math

import numpy as np
import pytest
from scipy.linalg import expm

from schwinger_medium.engine import (
    CompiledHamiltonian,
    EngineError,
    FullBasis,
    SectorBasis,
    StateVector,
    apply_operator,
    evolve,
    ground_state,
    krylov_expv,
    load_checkpoint,
    save_checkpoint,
    trotter2_step,
)
from schwinger_medium.model import (
    BackgroundCharges,
    LatticeConfig,
    PauliTermSum,
    build_hamiltonian,
    strong_coupling_vacuum_index,
)
from schwinger_medium.trajectory import ChargeSchedule, MovingCharge, StaticCharge, TrajectoryParams

from tests.test_model import free_single_particle_matrix

RNG = np.random.default_rng(20240917)


def random_state(basis, complex_=True):
    data = RNG.normal(size=basis.dim)
    if complex_:
        data = data + 1j * RNG.normal(size=basis.dim)
    data /= np.linalg.norm(data)
    return StateVector(basis, data)


def random_operator(n_sites):
    op = PauliTermSum(n_sites)
    op.add_const(RNG.normal())
    for k in range(n_sites):
        op.add_z(k, RNG.normal())
    op.add_zz(0, n_sites - 1, RNG.normal())
    for j in range(n_sites - 1):
        op.add_hop(j, RNG.normal())
    op.add_string(RNG.normal(), {0: "X", 1: "Z", 2: "Y"})
    op.add_string(RNG.normal(), {1: "Y", 3: "Y"})
    op.add_string(RNG.normal(), {0: "X", 2: "X"})
    return op


# -------------------------------------------------------------- bases


def test_sector_basis_enumeration():
    basis = SectorBasis(L=3, q_tot=0)
    assert basis.dim == math.comb(6, 3)
    assert np.all(np.bitwise_count(basis.states) == 3)
    assert np.all(np.diff(basis.states) > 0)
    with pytest.raises(EngineError):
        SectorBasis(L=2, q_tot=3)


def test_pair_classes_align():
    basis = SectorBasis(L=3, q_tot=-1)
    for a, b in [(0, 1), (2, 5), (1, 4)]:
        idx01, idx10 = basis.pair(a, b)
        mask = (1 << a) | (1 << b)
        assert np.array_equal(basis.states[idx01] ^ mask, basis.states[idx10])


def test_zsign_parity():
    basis = SectorBasis(L=3, q_tot=0)
    a, b = 1, 5
    idx01, _ = basis.pair(a, b)
    interior = [2, 3, 4]
    for pos, s in zip(idx01[:50], basis.zsign(a, b)[:50]):
        bits = sum((int(basis.states[pos]) >> k) & 1 for k in interior)
        assert s == (-1) ** bits


# ------------------------------------------------------- apply_operator


def test_identity_only_leaves_state_unchanged():
    basis = SectorBasis(L=3, q_tot=0)
    op = PauliTermSum(basis.n_sites)
    op.add_const(1.0)
    psi = random_state(basis)
    out = apply_operator(op, psi)
    assert np.allclose(out.data, psi.data, atol=1e-15)


def test_z_eigenvalue_on_basis_state():
    basis = FullBasis(L=2)
    idx = strong_coupling_vacuum_index(2)  # even bits set
    psi = StateVector.from_basis_state(basis, idx)
    for k, expected in [(0, -1.0), (1, 1.0), (2, -1.0), (3, 1.0)]:
        op = PauliTermSum(basis.n_sites)
        op.add_z(k, 1.0)
        out = apply_operator(op, psi)
        assert np.allclose(out.data, expected * psi.data)


def test_apply_matches_dense_full_basis():
    L = 3
    basis = FullBasis(L)
    op = random_operator(2 * L)
    dense = op.to_dense()
    psi = random_state(basis)
    out = apply_operator(op, psi)
    assert np.max(np.abs(out.data - dense @ psi.data)) < 1e-12


def test_apply_matches_dense_sector_basis():
    L = 3
    basis = SectorBasis(L, q_tot=0)
    op = PauliTermSum(2 * L)
    op.add_const(0.3)
    for j in range(2 * L - 1):
        op.add_hop(j, RNG.normal())
    op.add_z(2, -0.7)
    # charge-conserving combination (X Z Y - Y Z X)/2
    op.add_string(0.45, {1: "X", 2: "Z", 3: "Y"})
    op.add_string(-0.45, {1: "Y", 2: "Z", 3: "X"})
    dense = op.to_dense()[np.ix_(basis.states, basis.states)]
    psi = random_state(basis)
    out = apply_operator(op, psi)
    assert np.max(np.abs(out.data - dense @ psi.data)) < 1e-12


def test_sector_rejects_charge_violating_string():
    basis = SectorBasis(L=2, q_tot=0)
    op = PauliTermSum(4)
    op.add_string(1.0, {0: "X"})
    psi = random_state(basis)
    with pytest.raises(EngineError):
        apply_operator(op, psi)


def test_dimension_mismatch_rejected():
    psi = random_state(SectorBasis(L=2, q_tot=0))
    op = PauliTermSum(6)
    op.add_z(0, 1.0)
    with pytest.raises(EngineError):
        apply_operator(op, psi)


# --------------------------------------------------- compiled Hamiltonian


@pytest.mark.parametrize("lam", [None, 0, 1])
@pytest.mark.parametrize(
    "charges",
    [BackgroundCharges(), BackgroundCharges.from_pairs([(3, 1.0), (1, 0.25)])],
)
def test_compiled_hamiltonian_matches_dense(charges, lam):
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    dense = build_hamiltonian(cfg, charges, lambda_bar=lam).to_dense()
    for basis in [FullBasis(cfg.L), SectorBasis(cfg.L, q_tot=-1)]:
        ham = CompiledHamiltonian(cfg, basis, lambda_bar=lam)
        ham.set_charges(charges)
        sub = dense[np.ix_(basis.states, basis.states)].real
        psi = random_state(basis)
        assert np.max(np.abs(ham.matvec(psi.data) - sub @ psi.data)) < 1e-12


def test_charge_swap_refreshes_diagonal():
    cfg = LatticeConfig(L=2, m=0.2, g=0.6)
    basis = FullBasis(cfg.L)
    ham = CompiledHamiltonian(cfg, basis)
    qa = BackgroundCharges.from_pairs([(1, 1.0)])
    qb = BackgroundCharges.from_pairs([(3, 0.5)])
    ham.set_charges(qa)
    da = ham.diag.copy()
    ham.set_charges(qb)
    db = ham.diag.copy()
    ham.set_charges(qa)
    assert np.allclose(ham.diag, da)
    assert not np.allclose(da, db)


# ------------------------------------------------------------ eigensolve


def test_ground_state_matches_dense_at_l2():
    cfg = LatticeConfig(L=2, m=0.1, g=0.8)
    e, psi = ground_state(cfg, q_tot=0)
    dense = build_hamiltonian(cfg).to_dense().real
    basis = psi.basis
    sub = dense[np.ix_(basis.states, basis.states)]
    evals = np.linalg.eigvalsh(sub)
    assert e == pytest.approx(evals[0], abs=1e-10)
    ham = CompiledHamiltonian(cfg, basis)
    assert np.linalg.norm(ham.matvec(psi.data) - e * psi.data) < 1e-8


def test_free_vacuum_energy_matches_mode_filling():
    L, m = 4, 0.1
    cfg = LatticeConfig(L=L, m=m, g=0.0)
    e, _ = ground_state(cfg, q_tot=0)
    evals = np.linalg.eigvalsh(free_single_particle_matrix(L, m))
    oracle = m * L + np.sum(evals[:L])
    assert e == pytest.approx(oracle, abs=1e-9)


def test_charged_ground_state_prefers_screening_sector():
    # With one positive background charge at m/g = 0.125 the global ground
    # state carries light charge -1.
    cfg = LatticeConfig(L=4, m=0.1, g=0.8)
    charges = BackgroundCharges.from_pairs([(cfg.L - 1, 1.0)])
    e_neutral, _ = ground_state(cfg, q_tot=0, charges=charges)
    e_screen, psi = ground_state(cfg, q_tot=-1, charges=charges)
    assert e_screen < e_neutral
    assert psi.basis.q_tot == -1


# -------------------------------------------------------------- steppers


def test_krylov_expv_matches_dense_exponential():
    cfg = LatticeConfig(L=2, m=0.3, g=0.7)
    basis = SectorBasis(cfg.L, 0)
    ham = CompiledHamiltonian(cfg, basis)
    dense = build_hamiltonian(cfg).to_dense().real[np.ix_(basis.states, basis.states)]
    psi = random_state(basis)
    for dt in [0.1, 1.0, 4.0]:
        out = krylov_expv(ham.matvec, psi.data, dt, tol=1e-13)
        exact = expm(-1j * dt * dense) @ psi.data
        assert np.max(np.abs(out - exact)) < 1e-11


def test_trotter2_second_order():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    basis = SectorBasis(cfg.L, 0)
    ham = CompiledHamiltonian(cfg, basis)
    dense = build_hamiltonian(cfg).to_dense().real[np.ix_(basis.states, basis.states)]
    psi = random_state(basis)
    errs = []
    for dt in [0.2, 0.1, 0.05]:
        steps = round(1.0 / dt)
        data = psi.data.copy()
        for _ in range(steps):
            data = trotter2_step(ham, data, dt)
        exact = expm(-1j * dense) @ psi.data
        errs.append(np.max(np.abs(data - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.3)


def test_trotter2_unitary():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    basis = SectorBasis(cfg.L, 0)
    ham = CompiledHamiltonian(cfg, basis)
    data = random_state(basis).data
    for _ in range(50):
        data = trotter2_step(ham, data, 0.25)
    assert abs(np.linalg.norm(data) - 1.0) < 1e-12


# -------------------------------------------------------------- evolution


def fig1_schedule(L, statics=(), v_max=0.2, x0=3, xf=None):
    xf = xf if xf is not None else 2 * L - 5
    params = TrajectoryParams.with_default_ramp(v_max=v_max, x0=x0, xf=xf)
    return ChargeSchedule(
        n_sites=2 * L,
        statics=tuple(StaticCharge(site=s, Q=q) for s, q in statics),
        moving=MovingCharge(params, Q=1.0),
    )


def test_static_ground_state_stays_stationary():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    charges = BackgroundCharges.from_pairs([(3, 1.0)])
    e0, psi = ground_state(cfg, q_tot=-1, charges=charges)
    sched = ChargeSchedule(n_sites=cfg.n_sites, statics=(StaticCharge(site=3, Q=1.0),))
    records, _ = evolve(psi, cfg, sched, dt=0.5, t_end=10.0, stepper="krylov")
    energies = [r["E"] for r in records]
    assert max(abs(e - e0) for e in energies) < 1e-8
    assert all(abs(r["norm"] - 1.0) < 1e-10 for r in records)


def test_evolution_conserves_light_charge_and_norm():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    sched = fig1_schedule(cfg.L, v_max=0.3, x0=1, xf=3)
    q0 = sched.charges_at(0.0)
    _, psi = ground_state(cfg, q_tot=-1, charges=q0)

    def observer(t, state, ham_now):
        qs = []
        for k in range(cfg.n_sites):
            p1 = float(np.sum(np.abs(state.data) ** 2 * state.basis.bit(k)))
            qs.append(p1 - 1.0 if k % 2 == 0 else p1)
        return {"t": t, "q_tot": sum(qs), "norm": state.norm()}

    records, _ = evolve(psi, cfg, sched, stepper="krylov", observer=observer)
    assert all(abs(r["q_tot"] - (-1.0)) < 1e-9 for r in records)
    assert all(abs(r["norm"] - 1.0) < 1e-10 for r in records)


def test_time_reversal_returns_to_start():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    sched = fig1_schedule(cfg.L, v_max=0.3, x0=1, xf=3)
    _, psi0 = ground_state(cfg, q_tot=-1, charges=sched.charges_at(0.0))
    dt = 0.5
    n = int(math.ceil(sched.default_t_end() / dt))
    t_end = n * dt

    class Reversed:
        def charges_at(self, t):
            return sched.charges_at(t_end - t)

        def x_at(self, t):
            return sched.x_at(t_end - t)

        def v_at(self, t):
            return -sched.v_at(t_end - t)

    _, final = evolve(
        psi0, cfg, sched, dt=dt, t_end=n * dt, stepper="krylov", charge_sample="midpoint"
    )
    # time reversal is antiunitary: conjugate, replay the schedule backwards
    flipped = StateVector(final.basis, np.conj(final.data))
    _, back = evolve(flipped, cfg, Reversed(), dt=dt, t_end=n * dt, stepper="krylov")
    overlap = abs(np.vdot(psi0.data, np.conj(back.data))) ** 2
    assert overlap > 1 - 1e-6


def test_stepper_agreement_small_dt():
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    sched = fig1_schedule(cfg.L, v_max=0.3, x0=1, xf=3)
    _, psi = ground_state(cfg, q_tot=-1, charges=sched.charges_at(0.0))
    rk, _ = evolve(psi, cfg, sched, dt=0.05, stepper="krylov")
    rt, _ = evolve(psi, cfg, sched, dt=0.05, stepper="trotter2")
    diff = max(abs(a["E"] - b["E"]) for a, b in zip(rk, rt))
    assert diff < 1e-3


def test_checkpoint_round_trip(tmp_path):
    cfg = LatticeConfig(L=3, m=0.1, g=0.8)
    _, psi = ground_state(cfg, q_tot=0)
    path = tmp_path / "state.bin"
    save_checkpoint(path, psi, t=1.5, config=cfg, extra={"tag": "test"})
    loaded, header = load_checkpoint(path)
    assert header["t"] == 1.5
    assert header["tag"] == "test"
    assert header["q_tot"] == 0
    assert np.array_equal(loaded.data, psi.data)
