import math

import numpy as np
import pytest

from hazret.core import CylinderUnion
from hazret.geolaw import tv_to_geometric
from hazret.measures import FiniteMarkovModel, IIDModel, path_generator, sample_path, set_measure
from hazret.montecarlo import simulate_sigma
from hazret.tower import (Roof, TowerModel, TowerPoint, lemma_tsig_check, lift_set,
                          sample_tower_point, sample_tower_starts, sigma_tower, tower_step,
                          tsig_survey)

COIN = IIDModel([0.5, 0.5])
TWO_CELL = TowerModel(COIN, Roof.of({"0": 1, "1": 3}))


def base_path(tower, seed, p, stream, length):
    u = path_generator(seed, p, stream).random(length)[:, None]
    sym, _ = tower.base.transform(u, tower.base.initial_state(1))
    return tuple(sym[:, 0].tolist())


class TestRoof:
    def test_lookup(self):
        r = Roof.of({"00": 1, "01": 2, "10": 3, "11": 1})
        assert r((1, 0, 1)) == 3 and r.max == 3
        assert r.lookup(np.array([[0, 1], [1, 1]])).tolist() == [2, 1]

    def test_errors(self):
        with pytest.raises(ValueError):
            Roof.of({"0": 0, "1": 1})
        with pytest.raises(ValueError):
            Roof.of({"0": 1, "10": 1})
        with pytest.raises(ValueError):
            Roof.of({"0": 1, "1": 2})((),)
        with pytest.raises(ValueError):
            TowerModel(COIN, Roof.of({"0": 1}))


class TestStep:
    def test_unit_roof_is_base_shift(self):
        t = TowerModel(COIN, Roof.constant(1))
        p = TowerPoint((0, 1, 1), 0)
        assert tower_step(t, p) == TowerPoint((0, 1, 1), 0, 1)

    def test_climb_then_return(self):
        t = TowerModel(COIN, Roof.constant(3))
        p = TowerPoint((1, 0, 0), 0)
        seq = [p]
        for _ in range(3):
            seq.append(tower_step(t, seq[-1]))
        assert [(q.level, q.offset) for q in seq] == [(0, 0), (1, 0), (2, 0), (0, 1)]

    def test_invalid_level(self):
        with pytest.raises(ValueError):
            tower_step(TWO_CELL, TowerPoint((0, 1), 1))

    def test_level_invariant_long_walk(self):
        base = tuple(sample_path(COIN, 600_000, seed=3).tolist())
        p = TowerPoint(base, 0)
        for _ in range(10 ** 6):
            p = tower_step(TWO_CELL, p)
            assert 0 <= p.level < TWO_CELL.roof(p.base[p.offset:p.offset + 1])
        # roughly half a million base steps for a mean roof of 2
        assert abs(p.offset - 5e5) < 5e3


class TestMeasure:
    def test_two_cell(self):
        assert TWO_CELL.mean_roof == 2.0
        assert np.allclose(TWO_CELL.floor_measures(), [0.5, 0.25, 0.25])
        assert TWO_CELL.cell_weight("1") == pytest.approx(0.75)

    def test_floors_sum_to_one(self):
        m = FiniteMarkovModel([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]])
        t = TowerModel(m, Roof.of({"00": 1, "01": 2, "02": 3, "10": 2, "11": 1, "12": 3,
                                   "20": 3, "21": 1, "22": 2}))
        assert t.floor_measures().sum() == pytest.approx(1.0, abs=1e-10)

    def test_lifted_measure(self):
        U = lift_set(TWO_CELL, CylinderUnion.of(["10"]), 2)
        assert TWO_CELL.lifted_measure(U) == pytest.approx(0.25 / 2)


class TestLift:
    def test_floor_zero_always_valid(self):
        lift_set(TWO_CELL, CylinderUnion.of(["0", "1"]), 0)

    def test_above_roof_rejected(self):
        with pytest.raises(ValueError):
            lift_set(TWO_CELL, CylinderUnion.of(["0"]), 1)
        with pytest.raises(ValueError):
            lift_set(TWO_CELL, CylinderUnion.of(["1"]), 3)
        with pytest.raises(ValueError):
            lift_set(TWO_CELL, CylinderUnion.of(["1"]), -1)

    def test_subset_stays_valid(self):
        lift_set(TWO_CELL, CylinderUnion.of(["10", "11"]), 2)
        lift_set(TWO_CELL, CylinderUnion.of(["10"]), 2)

    def test_short_word_checks_every_cell_below(self):
        t = TowerModel(COIN, Roof.of({"00": 1, "01": 2, "10": 2, "11": 2}))
        with pytest.raises(ValueError):
            lift_set(t, CylinderUnion.of(["0"]), 1)
        lift_set(t, CylinderUnion.of(["1"]), 1)


class TestSampling:
    def test_constant_roof(self):
        t = TowerModel(COIN, Roof.constant(4))
        st = sample_tower_starts(t, 20_000, seed=1)
        assert (st.streams == 0).all() and (st.attempts == 1).all()
        counts = np.bincount(st.levels, minlength=4) / 20_000
        assert np.abs(counts - 0.25).max() < 3 * math.sqrt(0.25 * 0.75 / 20_000)

    def test_size_bias(self):
        N = 40_000
        st = sample_tower_starts(TWO_CELL, N, seed=2)
        p = (st.roofs == 3).mean()
        assert abs(p - 0.75) < 3 * math.sqrt(0.75 * 0.25 / N)
        assert (st.levels < st.roofs).all()

    def test_floor_occupancy(self):
        m = FiniteMarkovModel([[0.7, 0.3], [0.4, 0.6]])
        t = TowerModel(m, Roof.of({"00": 1, "01": 2, "10": 3, "11": 2}))
        N = 40_000
        st = sample_tower_starts(t, N, seed=3)
        freq = np.bincount(st.levels, minlength=3) / N
        mu = t.floor_measures()
        assert np.all(np.abs(freq - mu) < 3 * np.sqrt(mu * (1 - mu) / N))

    def test_point_consistent_with_starts(self):
        st = sample_tower_starts(TWO_CELL, 5, seed=4)
        for p in range(5):
            q = sample_tower_point(TWO_CELL, seed=4, path=p)
            assert q.level == st.levels[p]
            assert TWO_CELL.roof(q.x) == st.roofs[p]

    def test_occupancy_preserved_by_steps(self):
        N, steps = 2000, 1000
        st = sample_tower_starts(TWO_CELL, N, seed=5)
        after = np.zeros(3)
        for p in range(N):
            q = TowerPoint(base_path(TWO_CELL, 5, p, int(st.streams[p]), 700), int(st.levels[p]))
            for _ in range(steps):
                q = tower_step(TWO_CELL, q)
            after[q.level] += 1
        mu = TWO_CELL.floor_measures()
        before = np.bincount(st.levels, minlength=3) / N
        sd = np.sqrt(mu * (1 - mu) / N)
        assert np.all(np.abs(before - mu) < 3 * sd) and np.all(np.abs(after / N - mu) < 3 * sd)


class TestSigma:
    def test_unit_roof_equals_base(self):
        t = TowerModel(COIN, Roof.constant(1))
        U, V = CylinderUnion.of(["0110"]), CylinderUnion.of(["111"])
        a = sigma_tower(t, lift_set(t, U), lift_set(t, V), 5000, 3000, seed=6)
        b = simulate_sigma(COIN, U, V, 5000, 3000, seed=6)
        assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.tau, b.tau)

    @pytest.mark.parametrize("u_level,v_level", [(0, 0), (2, 0), (1, 2), (0, 1)])
    def test_engine_matches_walk(self, u_level, v_level):
        # a base path of horizon + 4 symbols lets the walk see exactly the engine's windows
        U = lift_set(TWO_CELL, CylinderUnion.of(["101"]), u_level)
        V = lift_set(TWO_CELL, CylinderUnion.of(["1100"]), v_level)
        N, seed = 300, 7
        res = sigma_tower(TWO_CELL, U, V, N, 2000, seed)
        st = sample_tower_starts(TWO_CELL, N, seed)
        for p in range(N):
            start = TowerPoint(base_path(TWO_CELL, seed, p, int(st.streams[p]), 2004), int(st.levels[p]))
            walk = lemma_tsig_check(TWO_CELL, start, U, V).sigma
            assert res.sigma[p] == (-1 if walk is None else walk)

    def test_intersecting_projections(self):
        U = lift_set(TWO_CELL, CylinderUnion.of(["10"]), 0)
        V = lift_set(TWO_CELL, CylinderUnion.of(["1"]), 1)
        with pytest.raises(ValueError):
            sigma_tower(TWO_CELL, U, V, 10, 10, seed=0)

    def test_markov_tower_geometric(self):
        m = FiniteMarkovModel([[0.6, 0.4], [0.35, 0.65]])
        t = TowerModel(m, Roof.of({"00": 1, "01": 2, "10": 3, "11": 2}))
        Ub, Vb = CylinderUnion.of(["0110"]), CylinderUnion.of(["1001"])
        pU, pV = set_measure(m, Ub), set_measure(m, Vb)
        res = sigma_tower(t, lift_set(t, Ub, 0), lift_set(t, Vb, 0), 20_000, 4000, seed=8)
        assert res.censored == 0
        assert tv_to_geometric(res.pmf, pV / (pU + pV)).lower <= 0.05


class TestTransfer:
    U = lift_set(TWO_CELL, CylinderUnion.of(["10"]), 2)
    V = lift_set(TWO_CELL, CylinderUnion.of(["0"]), 0)

    def test_floor_zero_start_not_in_W(self):
        res = lemma_tsig_check(TWO_CELL, TowerPoint((1, 0, 1, 1, 0) + (0,) * 5, 0), self.U, self.V)
        assert not res.in_W and res.holds and res.sigma == res.sigma_base

    def test_start_below_target_adds_one(self):
        res = lemma_tsig_check(TWO_CELL, TowerPoint((1, 0, 1, 1, 0) + (0,) * 5, 1), self.U, self.V)
        assert res.in_W and res.holds and res.sigma == res.sigma_base + 1

    def test_censored(self):
        res = lemma_tsig_check(TWO_CELL, TowerPoint((1,) * 6, 0), self.U, self.V)
        assert res.indeterminate and res.holds is None

    def test_survey(self):
        s = tsig_survey(TWO_CELL, self.U, self.V, 3000, seed=9, length=256)
        assert s.violations == 0 and s.checked + s.indeterminate == 3000
        assert s.in_W > 0

    def test_hazard_above_start_breaks_literal_identity(self):
        # start (x, 1) sits below the hazard (x, 2): the tower count stops at 0,
        # while the base count runs on through T x = 0010... and T^2 x = 010...
        U = lift_set(TWO_CELL, CylinderUnion.of(["0"]), 0)
        V = lift_set(TWO_CELL, CylinderUnion.of(["1"]), 2)
        res = lemma_tsig_check(TWO_CELL, TowerPoint((1, 0, 0, 1, 0), 1), U, V)
        assert res.in_W_V and not res.in_W
        assert (res.sigma, res.sigma_base) == (0, 2)
        assert res.holds is False and res.corrected_holds is True

    def test_survey_corrected_identity(self):
        U = lift_set(TWO_CELL, CylinderUnion.of(["10"]), 1)
        V = lift_set(TWO_CELL, CylinderUnion.of(["11"]), 2)
        s = tsig_survey(TWO_CELL, U, V, 3000, seed=10, length=256)
        assert s.corrected_violations == 0
        assert s.violations > 0
