import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hazret.geolaw import (PROOF_FINAL, STATEMENT, BoundInputs, Pmf, clamp_phi, default_grids,
                           empirical_pmf, geo_pmf, hazard_bound, intro_parameter,
                           lemma34_parameter, optimize_bound, tv_distance, tv_to_geometric)


class TestPmf:
    def test_geo_example(self):
        g = geo_pmf(0.5, 1)
        assert np.allclose(g.probs, [0.5, 0.25]) and g.tail == pytest.approx(0.25)

    def test_geo_near_one(self):
        assert geo_pmf(1 - 1e-15, 3).probs[0] == pytest.approx(1.0)

    @given(st.floats(1e-6, 1 - 1e-6), st.integers(0, 500))
    def test_geo_normalised(self, rho, K):
        g = geo_pmf(rho, K)
        assert g.probs.sum() + g.tail == pytest.approx(1.0, abs=1e-12)

    def test_geo_domain(self):
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                geo_pmf(bad, 3)

    def test_mass_check(self):
        with pytest.raises(ValueError):
            Pmf([0.5, 0.4], 0.0)

    def test_empirical(self):
        p = empirical_pmf([0, 0, 1, 3])
        assert p.probs.tolist() == [0.5, 0.25, 0.0, 0.25] and p.tail == 0.0


class TestTV:
    def test_identical_laws(self):
        g = geo_pmf(0.3, 10)
        lo, hi = tv_distance(g, g)
        assert lo == 0.0 and hi == pytest.approx(g.tail)

    def test_point_mass_vs_half(self):
        lo, hi = tv_to_geometric(Pmf([1.0]), 0.5, K=200)
        assert lo == pytest.approx(0.5) and hi == pytest.approx(0.5)

    def test_geometric_pair_against_summation(self):
        # brute-force summation with 30-digit arithmetic gives exactly 0.2
        lo, hi = tv_distance(geo_pmf(0.4, 200), geo_pmf(0.6, 200))
        assert hi - lo < 1e-10
        assert lo == pytest.approx(0.2, abs=1e-12)

    def test_padding(self):
        lo, _ = tv_distance(Pmf([0.5, 0.5]), Pmf([0.5, 0.25, 0.25]))
        assert lo == pytest.approx(0.25)

    @settings(max_examples=50)
    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_pseudometric(self, a, b, c):
        pa, pb, pc = geo_pmf(a, 40), geo_pmf(b, 40), geo_pmf(c, 30)
        assert tv_distance(pa, pb) == tv_distance(pb, pa)
        slack = pa.tail + pb.tail + pc.tail
        assert tv_distance(pa, pc).lower <= tv_distance(pa, pb).lower + tv_distance(pb, pc).lower + slack

    def test_bracket_contains_truth(self):
        p, q = geo_pmf(0.2, 5), geo_pmf(0.25, 5)
        truth = tv_distance(geo_pmf(0.2, 2000), geo_pmf(0.25, 2000)).lower
        lo, hi = tv_distance(p, q)
        assert lo <= truth + 1e-12 <= hi + 2e-12


class TestParameters:
    def test_lemma34(self):
        assert lemma34_parameter(0.5, 0.5) == pytest.approx(2 / 3)
        assert lemma34_parameter(0.3, 1e-12) == pytest.approx(1.0)
        for p in (0.1, 0.4, 0.9):
            assert lemma34_parameter(p, p) == pytest.approx(1 / (2 - p))

    def test_lemma34_domain(self):
        with pytest.raises(ValueError):
            lemma34_parameter(0.0, 0.5)

    def test_intro(self):
        assert intro_parameter(2.0, 2.0) == 0.5
        assert intro_parameter(1.0, 3.0) == 0.25
        assert intro_parameter(1.0, 1e-12) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            intro_parameter(0.0, 1.0)

    @pytest.mark.parametrize("pU", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    @pytest.mark.parametrize("pV", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    def test_shifted_parameter_gap(self, pU, pV):
        rho_shift = pV / (pV + pU * (1 - pV))
        rho = pV / (pV + pU)
        K = int(50 / min(rho, rho_shift)) + 10
        d = tv_distance(geo_pmf(rho_shift, K), geo_pmf(rho, K))
        assert d.lower <= 2 * pU + 1e-12


def inputs(**kw):
    base = dict(pU=1e-6, pV=1e-6, pUr=1e-6, pVr=1e-6, n=20, m=20, M=100_000, R=1000, r=10,
                kappa=20, phi=lambda k: 0.0)
    base.update(kw)
    return BoundInputs(**base)


class TestBound:
    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            hazard_bound(inputs(pU=0.0, pV=0.0))

    def test_r_range(self):
        with pytest.raises(ValueError):
            hazard_bound(inputs(r=20))

    def test_shifted_smaller_rejected(self):
        with pytest.raises(ValueError):
            hazard_bound(inputs(pUr=1e-7))

    def test_hand_arithmetic(self):
        # with phi = 0 except the clamped argument kappa + r - n = 10 > 0
        miss = (1 - 1e-6) ** 100_001
        s = 2e-6
        stmt = 2 * (miss + 1e-6 + 6 * 1e8 * s * s + 0 + 8 * 1e8 * s * (2e-6 + 0))
        proof = 2 * miss + 2e-6 + 8 * 1e8 * s * s + 16 * 1e8 * s * 0 + 0 + 4e5 * 2e-12
        # 1 - 1e-6 is rounded in binary, so the power differs in the 12th digit
        assert hazard_bound(inputs(), STATEMENT) == pytest.approx(stmt, rel=1e-9)
        assert hazard_bound(inputs(), PROOF_FINAL) == pytest.approx(proof, rel=1e-9)

    def test_clamped_phi_argument(self):
        # R <= n makes phi(R - n) the trivial 1 in both variants
        v = hazard_bound(inputs(R=20), STATEMENT)
        assert v >= 2 * 6 * 100_000

    def test_clamp(self):
        f = clamp_phi(lambda k: 5.0)
        assert f(0) == 1.0 and f(3) == 1.0

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            hazard_bound(inputs(), "other")

    @settings(max_examples=60)
    @given(st.floats(1e-6, 0.2), st.floats(1e-6, 0.2), st.floats(1.0, 3.0), st.floats(1.0, 3.0),
           st.integers(1, 1000), st.integers(1, 400), st.floats(0, 0.5), st.floats(1.0, 2.0),
           st.sampled_from([STATEMENT, PROOF_FINAL]))
    def test_monotone(self, pU, pV, fu, fv, M, R, c, bump, variant):
        phi = lambda k: min(1.0, c * 0.8 ** k)
        phi2 = lambda k: min(1.0, bump * c * 0.8 ** k)
        b = inputs(pU=pU, pV=pV, pUr=min(1, pU * fu), pVr=min(1, pV * fv), n=8, m=6, M=M, R=R, r=3,
                   kappa=2, phi=phi)
        v = hazard_bound(b, variant)
        for field, val in [("pU", pU * 1.1), ("pUr", min(1, b.pUr * 1.1)), ("pVr", min(1, b.pVr * 1.1)),
                           ("phi", phi2)]:
            if field == "pU" and val > b.pUr:
                continue
            assert hazard_bound(inputs(**{**vars(b), field: val}), variant) >= v * (1 - 1e-12)
        assert hazard_bound(inputs(**{**vars(b), "kappa": 5}), variant) <= v * (1 + 1e-12)

    def test_not_monotone_in_pV_through_miss_term(self):
        # a larger hazard makes missing it less likely, so pV can lower the bound
        lo = hazard_bound(inputs(pV=1e-6, pVr=1e-6, M=1, R=1, r=5), STATEMENT)
        hi = hazard_bound(inputs(pV=1e-2, pVr=1e-2, M=1, R=1, r=5), STATEMENT)
        assert hi < lo


class TestOptimize:
    def args(self, **kw):
        base = dict(pU=1e-3, pV=2e-3, pUr=lambda r: 1e-3 * 2 ** r, pVr=lambda r: 2e-3 * 2 ** r,
                    n=10, m=10, kappa=10, phi=lambda k: 0.5 ** k)
        base.update(kw)
        return base

    def test_singleton(self):
        opt = optimize_bound(**self.args(), M_grid=[7], R_grid=[30], r_grid=[2])
        assert (opt.M, opt.R, opt.r) == (7, 30, 2)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            optimize_bound(**self.args(), M_grid=[], R_grid=[1], r_grid=[0])

    def test_not_worse_than_corollary_choice(self):
        a = self.args()
        n = 10
        M0, R0, r0 = int(math.exp((math.log(2) + 0.1) * n)), n * n, n // 2
        Mg, Rg, rg = default_grids(a["pU"], a["pV"], n, n)
        opt = optimize_bound(**a, M_grid=Mg + [M0], R_grid=Rg + [R0], r_grid=rg)
        at = hazard_bound(BoundInputs(a["pU"], a["pV"], a["pUr"](r0), a["pVr"](r0), n, n, M0, R0, r0,
                                      a["kappa"], a["phi"]))
        assert opt.value <= at

    def test_tie_break_lexicographic(self):
        opt = optimize_bound(**self.args(phi=lambda k: 1.0, pUr=lambda r: 1e-3, pVr=lambda r: 2e-3),
                             M_grid=[1], R_grid=[5, 3], r_grid=[4, 1, 2])
        # nothing depends on R or r here, so the smallest pair wins
        assert (opt.R, opt.r) == (3, 1)
