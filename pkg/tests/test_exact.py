import dataclasses
import math

import numpy as np
import pytest

from helpers import birth_death_mean, erlang_a_stationary, mmn_stationary, poisson_pmf_ref
from hwq.errors import Reducible, ThetaOutOfRange, TruncationTooSmall, Unsupported
from hwq.model import ClassParams, MacroState, build_config
from hwq.policy import FIFO, NONPREEMPTIVE, PREEMPTIVE
from hwq.exact import (
    _gth_dense,
    abar_apply,
    abar_vector,
    build_generator,
    enumerate_states,
    expectation,
    generator_identity,
    negpart_square_bound,
    negpart_square_mgf,
    poisson_bound_scan,
    poisson_pmf,
    scaled_poisson_mgf,
    stationary,
)

MM2 = build_config([ClassParams(1.0, 1.0, 0.0)], 1.0, 1.0)  # N = 2
TWO_CLASS_AB = build_config(
    [ClassParams(0.5, 1.0, 0.5), ClassParams(1.0, 2.0, 1.0)], 16.0, 1.0
)


def test_enumerate_single_class_count():
    idx = enumerate_states(MM2, PREEMPTIVE, 5)
    assert idx.n_states == 6  # z = 0..5


def test_enumerate_two_class_lattice_count():
    cfg = dataclasses.replace(TWO_CLASS_AB, n_servers=2)
    idx = enumerate_states(cfg, PREEMPTIVE, 2)
    assert idx.n_states == 6  # (0,0),(1,0),(0,1),(2,0),(1,1),(0,2)


def test_enumerate_nonpreemptive_pairs():
    cfg = dataclasses.replace(TWO_CLASS_AB, n_servers=1)
    idx = enumerate_states(cfg, NONPREEMPTIVE, 1)
    keys = {idx.key(idx.z[i], idx.psi[i]) for i in range(idx.n_states)}
    assert keys == {
        ((0, 0), (0, 0)),
        ((1, 0), (1, 0)),
        ((0, 1), (0, 1)),
    }


def test_enumerate_rejects_fifo_and_small_K():
    with pytest.raises(Unsupported):
        enumerate_states(MM2, FIFO, 10)
    with pytest.raises(TruncationTooSmall):
        enumerate_states(MM2, PREEMPTIVE, 1)


def test_generator_is_mmn_birth_death():
    idx = enumerate_states(MM2, PREEMPTIVE, 30)
    gen = build_generator(idx)
    Q = gen.Q.toarray()
    for z in range(30):
        assert Q[z, z + 1] == pytest.approx(1.0)  # birth lam*r = 1
    for z in range(1, 31):
        assert Q[z, z - 1] == pytest.approx(min(z, 2))  # death mu*min(z,N)
    # row sums vanish exactly, boundary included
    assert np.abs(Q.sum(axis=1)).max() == 0.0


def test_generator_preemption_rates():
    # 2 classes, N=1, state (1,1): class-1 (high) is served, class-0 queued;
    # departures: high-class service at mu_1, low-class abandonment at nu_0
    cfg = dataclasses.replace(TWO_CLASS_AB, n_servers=1)
    idx = enumerate_states(cfg, PREEMPTIVE, 6)
    gen = build_generator(idx)
    i = idx.index_of((1, 1))
    lo, hi = gen.row_ptr[i], gen.row_ptr[i + 1]
    departures = {
        tuple(gen.dst_z[t]): gen.rate[t]
        for t in range(lo, hi)
        if gen.dst_z[t].sum() < 2
    }
    assert departures[(1, 0)] == pytest.approx(cfg.mus[1])  # service of class 1
    assert departures[(0, 1)] == pytest.approx(cfg.nus[0])  # abandonment of class 0


def test_stationary_mm2_closed_form():
    gen = build_generator(enumerate_states(MM2, PREEMPTIVE, 60))
    sv = stationary(gen)
    ez = expectation(sv.pi, gen.idx.z.sum(axis=1))
    assert abs(ez - 4.0 / 3.0) <= 1e-10
    # independent birth-death oracle agrees
    oracle = birth_death_mean(lambda n: 1.0, lambda n: min(n, 2), 60)
    assert ez == pytest.approx(oracle, abs=1e-12)


def test_stationary_poisson_at_nu_eq_mu():
    cfg = build_config([ClassParams(1.0, 1.0, 1.0)], 25.0, 1.0)
    K = math.ceil(25 + 12 * 5)
    gen = build_generator(enumerate_states(cfg, PREEMPTIVE, K))
    sv = stationary(gen)
    pois = poisson_pmf(25.0, np.arange(K + 1))
    tv = 0.5 * (np.abs(sv.pi - pois).sum() + max(0.0, 1.0 - pois.sum()))
    assert tv <= 1e-8


def test_stationary_erlang_a_oracle():
    # independent-recursion oracle for a case with nu != mu
    cfg = build_config([ClassParams(1.0, 1.0, 0.5)], 16.0, 1.0)
    K = 120
    gen = build_generator(enumerate_states(cfg, PREEMPTIVE, K))
    sv = stationary(gen)
    oracle = erlang_a_stationary(16.0, 1.0, 0.5, cfg.n_servers, K)
    assert np.abs(sv.pi - np.array(oracle)).max() <= 1e-12


def test_gth_single_state():
    assert _gth_dense(np.zeros((1, 1))) == pytest.approx([1.0])


def test_gth_power_agreement():
    cfg = build_config([ClassParams(0.5, 1.0, 0.5), ClassParams(1.0, 2.0, 1.0)], 9.0, 1.0)
    gen = build_generator(enumerate_states(cfg, PREEMPTIVE, 40))
    tv = 0.5 * np.abs(
        stationary(gen, method="gth").pi - stationary(gen, method="power").pi
    ).sum()
    assert tv <= 1e-9


def test_nonpreemptive_solve_single_class_matches_mmn():
    # one class: non-preemptive and preemptive collapse to the same M/M/N chain
    cfg = build_config([ClassParams(1.0, 1.0, 0.0)], 4.0, 1.0)
    K = 70
    sv_np = stationary(build_generator(enumerate_states(cfg, NONPREEMPTIVE, K)))
    oracle = mmn_stationary(4.0, 1.0, cfg.n_servers, K)
    assert np.abs(sv_np.pi - np.array(oracle)).max() <= 1e-12


def test_reducible_detected():
    gen = build_generator(enumerate_states(MM2, PREEMPTIVE, 30))
    Q = gen.Q.tolil()
    Q[5] = 0.0  # absorbing row
    broken = dataclasses.replace(gen, Q=Q.tocsr())
    with pytest.raises(Reducible):
        stationary(broken)


def test_abar_constant_is_zero():
    gen = build_generator(enumerate_states(TWO_CLASS_AB, PREEMPTIVE, 40))
    out = abar_vector(gen, lambda Z, PSI, c: np.ones(Z.shape[0]))
    assert np.abs(out).max() == 0.0
    x = MacroState(z=(3, 2), psi=(3, 2))
    assert abar_apply(lambda s, c: 5.0, x, gen) == 0.0


def test_abar_apply_matches_hand_sum():
    # Abar phi_hat at an interior state of M/M/2: (lam - mu*min(z,N))/sqrt(r)
    gen = build_generator(enumerate_states(MM2, PREEMPTIVE, 30))

    def phi_hat(s, cfg):
        return sum((zi - ri) / mu for zi, ri, mu in zip(s.z, cfg.rho_r, cfg.mus))

    for z in (0, 1, 2, 5):
        got = abar_apply(phi_hat, MacroState(z=(z,), psi=(min(z, 2),)), gen)
        assert got == pytest.approx(1.0 - min(z, 2), abs=1e-12)


def test_generator_identity_truncated_functional():
    gen = build_generator(enumerate_states(MM2, PREEMPTIVE, 60))
    sv = stationary(gen)
    resid = generator_identity(
        gen, sv.pi, lambda Z, PSI, c: np.minimum(Z.sum(axis=1), 3.0)
    )
    assert resid <= 1e-9
    # identically-1 functional gives exactly zero
    assert generator_identity(gen, sv.pi, lambda Z, PSI, c: np.ones(Z.shape[0])) == 0.0


def test_truncation_mass_control_on_acceptance_instances():
    # doubling the K-margin moves E[exp(theta*zhat^+)] by < 1e-8 (nu = mu cases)
    for r in (25.0, 100.0):
        cfg = build_config([ClassParams(1.0, 1.0, 1.0)], r, 1.0)
        vals = []
        for mult in (12, 24):
            K = math.ceil(r + mult * math.sqrt(r)) + cfg.n_servers
            gen = build_generator(enumerate_states(cfg, PREEMPTIVE, K))
            sv = stationary(gen)
            zhat = (gen.idx.z.sum(axis=1) - cfg.rho_r_total) / cfg.sqrt_r
            vals.append(expectation(sv.pi, np.exp(0.5 * np.maximum(zhat, 0.0))))
        assert abs(vals[0] - vals[1]) < 1e-8


# --- Poisson closed forms ---------------------------------------------------


def test_poisson_pmf_value_and_normalization():
    assert poisson_pmf(4.0, 4) == pytest.approx(0.19536681, abs=1e-8)
    assert poisson_pmf(4.0, 4) == pytest.approx(poisson_pmf_ref(4.0, 4), rel=1e-12)
    for p in (4.0, 25.0, 100.0, 10_000.0):
        ns = np.arange(0, int(p + 12 * math.sqrt(p)) + 1)
        assert abs(poisson_pmf(p, ns).sum() - 1.0) <= 1e-12


def test_poisson_bound_scan_range():
    c100 = poisson_bound_scan(100.0)
    assert c100 <= 2.0
    # lower sanity: the mode term pmf(floor(p)) * sqrt(p) is ~ 1/sqrt(2 pi)
    assert c100 >= poisson_pmf(100.0, 100) * 10.0


def test_poisson_bound_scan_trend():
    cs = [poisson_bound_scan(p) for p in (50.0, 100.0, 1000.0, 10_000.0)]
    assert all(a >= b for a, b in zip(cs, cs[1:]))  # non-increasing
    assert all(c <= 2.0 for c in cs)
    # stabilizes near the Stirling value 1/sqrt(2 pi) ~ 0.3989
    assert cs[-1] == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=0.01)


def test_scaled_poisson_mgf():
    assert scaled_poisson_mgf(0.0, 1.0, 100.0) == pytest.approx(1.0)
    expected = math.exp(-10.0 + 100.0 * (math.exp(0.1) - 1.0))
    assert scaled_poisson_mgf(1.0, 1.0, 100.0) == pytest.approx(expected, rel=1e-12)
    # approaches the Gaussian limit exp(theta^2 rho / 2) from above as r grows
    limit = math.exp(0.5)
    gaps = [abs(scaled_poisson_mgf(1.0, 1.0, r) - limit) for r in (100.0, 400.0, 1600.0)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_negpart_square_mgf():
    assert negpart_square_mgf(0.0, 50.0) == pytest.approx(1.0)
    with pytest.raises(ThetaOutOfRange):
        negpart_square_mgf(0.5, 50.0)
    for p in (50.0, 100.0, 1000.0):
        v = negpart_square_mgf(0.4, p)
        assert v <= negpart_square_bound(0.4, p)


def test_negpart_square_mgf_against_direct_sum():
    # independent direct summation with the reference pmf
    p, theta = 50.0, 0.3
    direct = sum(
        poisson_pmf_ref(p, n) * math.exp(theta * max(p - n, 0.0) ** 2 / p)
        for n in range(0, 300)
    )
    assert negpart_square_mgf(theta, p) == pytest.approx(direct, rel=1e-10)
