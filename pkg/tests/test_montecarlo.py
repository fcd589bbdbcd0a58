import numpy as np
import pytest

import hazret.montecarlo as mc
from hazret.core import Convention, CylinderUnion, tau_and_sigma
from hazret.geolaw import lemma34_parameter, tv_distance, tv_to_geometric
from hazret.measures import FiniteMarkovModel, GaussDigitModel, IIDModel, sample_path
from hazret.oracle import bernoulli_pair_instance, build_window_chain, exact_sigma_distribution

SYM = lambda a: FiniteMarkovModel([[1 - a, a], [a, 1 - a]])


def test_coin_pair_matches_geometric():
    model, U, V = bernoulli_pair_instance(0.5, 0.5)
    res = mc.simulate_sigma(model, U, V, 100_000, 10_000, seed=11)
    assert res.censored == 0
    assert tv_to_geometric(res.pmf, lemma34_parameter(0.5, 0.5)).lower <= 0.02


def test_two_state_against_exact_law():
    m = SYM(0.2)
    U, V = CylinderUnion.of(["0"]), CylinderUnion.of(["1"])
    exact = exact_sigma_distribution(build_window_chain(m, 1), U, V, 200)
    res = mc.simulate_sigma(m, U, V, 50_000, 2000, seed=3)
    assert tv_distance(res.pmf, exact).lower <= 0.02


def test_hazard_at_start_gives_zero():
    m = IIDModel([0.4, 0.6])
    res = mc.simulate_sigma(m, CylinderUnion.of(["00"]), CylinderUnion.of(["1"]), 20_000, 200, seed=0)
    assert (res.sigma[res.tau == 0] == 0).all()
    assert (res.sigma <= res.tau).all()
    assert abs((res.tau == 0).mean() - 0.6) < 4 * np.sqrt(0.24 / 20_000)


def test_intersecting_sets_rejected():
    with pytest.raises(ValueError):
        mc.simulate_sigma(IIDModel([0.5, 0.5]), CylinderUnion.of(["01"]), CylinderUnion.of(["0"]),
                          10, 10, seed=0)


def test_alphabet_mismatch():
    with pytest.raises(ValueError):
        mc.simulate_sigma(IIDModel([0.5, 0.5]), CylinderUnion.of(["01"], 3), CylinderUnion.of(["11"], 3),
                          10, 10, seed=0)


class TestReproducibility:
    model = FiniteMarkovModel([[0.6, 0.4], [0.3, 0.7]])
    U, V = CylinderUnion.of(["0101"]), CylinderUnion.of(["111"])

    def run(self, threads=1):
        return mc.simulate_sigma(self.model, self.U, self.V, 20_000, 5000, seed=42, threads=threads)

    def test_threads(self):
        a, b = self.run(1), self.run(4)
        assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.tau, b.tau)

    def test_block_and_chunk_sizes(self, monkeypatch):
        a = self.run()
        monkeypatch.setattr(mc, "BLOCK", 777)
        monkeypatch.setattr(mc, "CHUNK_ELEMS", 1 << 12)
        b = self.run(3)
        assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.tau, b.tau)

    def test_seed_matters(self):
        a = self.run()
        b = mc.simulate_sigma(self.model, self.U, self.V, 20_000, 5000, seed=43)
        assert not np.array_equal(a.sigma, b.sigma)

    def test_prefix_stable(self):
        # path i does not depend on how many paths are run
        a = self.run()
        b = mc.simulate_sigma(self.model, self.U, self.V, 1000, 5000, seed=42)
        assert np.array_equal(a.sigma[:1000], b.sigma)


@pytest.mark.parametrize("convention", list(Convention))
def test_engine_matches_reference_scan(convention):
    m = FiniteMarkovModel([[0.5, 0.5], [0.3, 0.7]])
    U, V = CylinderUnion.of(["01", "00"]), CylinderUnion.of(["111"])
    horizon = 300
    out = mc.run_paths(m, mc.CylinderDetector(U, V), 60, horizon, seed=5, convention=convention)
    for p in range(60):
        orbit = sample_path(m, horizon + 3, seed=5, path=p)
        h = tau_and_sigma(orbit, U, V, convention, horizon=horizon)
        if h.censored:
            assert out.tau[p] == -1
        else:
            assert (out.tau[p], out.sigma[p]) == (h.tau, h.sigma)


def test_large_alphabet_uses_sorted_lookup():
    m = IIDModel(np.full(40, 1 / 40))
    U = CylinderUnion.of([tuple([1] * 5)], 40)
    V = CylinderUnion.of([(2,)], 40)
    res = mc.simulate_sigma(m, U, V, 5000, 2000, seed=2)
    assert res.censored == 0
    # five-fold repeat has measure 40^-5, so essentially no visits before the hazard
    assert (res.sigma == 0).all()


def test_censoring_monotone_in_horizon():
    m = SYM(0.1)
    U, V = CylinderUnion.of(["0"]), CylinderUnion.of(["111111"])
    cens = [mc.simulate_sigma(m, U, V, 4000, h, seed=8).censored for h in (10, 50, 200, 1000)]
    assert all(b <= a for a, b in zip(cens, cens[1:]))
    short = mc.simulate_sigma(m, U, V, 4000, 10, seed=8)
    assert short.flagged and short.censored_fraction > 0.1


def test_gauss_digits():
    g = GaussDigitModel(64)
    U, V = CylinderUnion.of([(1, 1)], g.alphabet_size), CylinderUnion.of([(2,)], g.alphabet_size)
    res = mc.simulate_sigma(g, U, V, 20_000, 4000, seed=4)
    assert res.censored == 0
    # a hazard at window 0 forces a zero count, so P(count = 0) >= P(V)
    p = g.cylinder_measure([2])
    assert res.pmf.probs[0] >= p - 4 * np.sqrt(p * (1 - p) / 20_000)


def test_mc_noise_scaling():
    a, b = mc.mc_noise(0.3, 10_000), mc.mc_noise(0.3, 40_000)
    assert b == pytest.approx(a / 2, rel=1e-9)


def test_entropy_rate():
    assert mc.entropy_rate(IIDModel([0.5, 0.5])) == pytest.approx(np.log(2))
    assert mc.entropy_rate(SYM(0.5)) == pytest.approx(np.log(2))
    with pytest.raises(TypeError):
        mc.entropy_rate(GaussDigitModel())


class TestPairExperiment:
    def test_deterministic(self):
        kw = dict(ns=[4, 6], n_samples=3000, seed=9)
        a = mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), **kw)
        b = mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), **kw, threads=2)
        assert a.xi == b.xi and a.eta == b.eta and a.tv_lower == b.tv_lower

    def test_match_rule_balances_measures(self):
        m = IIDModel([0.3, 0.7])
        rep = mc.cylinder_pair_experiment(m, [10, 14], 2000, seed=1, m_rule="match")
        for row in rep.rows:
            # best available m keeps the ratio within one symbol's worth of likelihood
            assert 0.3 / 0.7 * 0.3 <= row.pV / row.pU <= 1 / 0.3
            assert row.bound is not None and row.bound.statement >= row.tv.lower - 1e-12

    def test_fixed_clash(self):
        with pytest.raises(ValueError):
            mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), [3], 10, seed=0,
                                        xi=(0, 1, 1, 0), eta=(0, 1, 1, 1))

    def test_offset_rule(self):
        rep = mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), [5], 500, seed=2, m_rule=-2)
        assert rep.rows[0].m == 3

    def test_tiny_horizon_censors(self):
        rep = mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), [8], 2000, seed=3, horizon=5)
        assert rep.rows[0].censored > 0.1 * 2000

    def test_bad_schedule(self):
        with pytest.raises(ValueError):
            mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), [0], 10, seed=0)
        with pytest.raises(ValueError):
            mc.cylinder_pair_experiment(IIDModel([0.5, 0.5]), [3], 10, seed=0, m_rule="odd")

    def test_gauss_has_no_bound(self):
        rep = mc.cylinder_pair_experiment(GaussDigitModel(), [2], 2000, seed=5)
        assert rep.rows[0].bound is None
