import numpy as np
import pytest

from macroregimes.synth import (
    BlockSpec,
    NotPositiveDefiniteError,
    business_days,
    planted_flow_matrix,
    planted_leadlag_panel,
    planted_regime_panel,
    random_block_specs,
    signed_sbm,
)


class TestPlantedRegimePanel:
    def test_deterministic(self):
        a, ta = planted_regime_panel(3, 8, 50, seed=4)
        b, tb = planted_regime_panel(3, 8, 50, seed=4)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(ta, tb)
        c, _ = planted_regime_panel(3, 8, 50, seed=5)
        assert not np.array_equal(a.values, c.values)

    def test_truth_layout(self):
        panel, truth = planted_regime_panel(2, 6, [30, 20, 10], sequence=[0, 1, 0])
        assert panel.T == 60
        np.testing.assert_array_equal(truth, [0] * 30 + [1] * 20 + [0] * 10)

    def test_block_correlation_recovered(self):
        spec = BlockSpec((0, 0, 0, 1, 1, 1), within=0.7, between=-0.3)
        panel, _ = planted_regime_panel(1, 6, 20000, block_specs=[spec], seed=1)
        C = np.corrcoef(panel.values.T)
        np.testing.assert_allclose(C, spec.matrix(), atol=0.03)

    def test_single_regime_is_stationary(self):
        panel, truth = planted_regime_panel(1, 5, 4000, seed=2)
        assert set(truth) == {0}
        a = np.corrcoef(panel.values[:2000].T)
        b = np.corrcoef(panel.values[2000:].T)
        assert np.abs(a - b).max() < 0.1

    def test_not_positive_definite(self):
        bad = np.full((3, 3), -0.9)
        np.fill_diagonal(bad, 1.0)
        with pytest.raises(NotPositiveDefiniteError) as err:
            planted_regime_panel(1, 3, 10, block_specs=[bad])
        assert np.all(np.linalg.eigvalsh(err.value.suggestion) > 0)
        np.testing.assert_allclose(np.diag(err.value.suggestion), 1.0)

    def test_random_specs_valid(self):
        for spec in random_block_specs(4, 12, seed=0):
            assert np.all(np.linalg.eigvalsh(spec.matrix()) > 0)

    def test_business_days(self):
        days = business_days(10)
        assert len(days) == 10 and all(d.weekday() < 5 for d in days)


class TestPlantedLeadLag:
    def test_lagged_dependence(self):
        panel, truth = planted_leadlag_panel([2, 2], 3, 0.8, 0.2, T=2000, seed=0)
        X = panel.values
        lead, lag = X[:, truth.labels == 0].mean(1), X[:, truth.labels == 1].mean(1)
        assert np.corrcoef(lead[:-3], lag[3:])[0, 1] > 0.9
        assert abs(np.corrcoef(lead, lag)[0, 1]) < 0.1
        assert truth.edges == [(0, 2), (0, 3), (1, 2), (1, 3)]

    def test_class_labels_cycle(self):
        panel, _ = planted_leadlag_panel([1, 1, 1], 1, 0.5, 0.1, T=100)
        assert [a.asset_class.value for a in panel.assets] == ["equity", "fixed_income", "commodity"]

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            planted_leadlag_panel([2, 2], 0, 0.5, 0.1)
        with pytest.raises(ValueError):
            planted_leadlag_panel([2, 2], 1, 1.5, 0.1)


class TestGraphs:
    def test_flow_matrix_skew(self):
        M, lab = planted_flow_matrix([3, 2, 4], [(0, 1), (2, 1)], noise=0.3, seed=0)
        np.testing.assert_allclose(M, -M.T)
        assert np.all(M[np.ix_(lab == 0, lab == 1)] != 0)

    def test_signed_sbm(self):
        W, lab = signed_sbm(12, 3, p_in_pos=1.0, p_out_neg=1.0, seed=0)
        np.testing.assert_array_equal(W, W.T)
        same = lab[:, None] == lab[None, :]
        assert np.all(W[same & ~np.eye(12, dtype=bool)] == 1)
        assert np.all(W[~same] == -1)
        assert np.all(np.diag(W) == 0)
