import math
from unittest.mock import MagicMock

import pytest

from app.exceptions import ConfigError
from app.graph import corpus
from app.models.schemas import BalanceReport
from app.services import functionals


def _report(kind="identity", lhs=1.0, rhs=1.0, tolerance=1e-5, **terms):
    return BalanceReport.build("item", kind, lhs, rhs, terms, tolerance)


def _grid(cells):
    surface = MagicMock()
    surface.quadrature.base_cells_per_axis = cells
    surface.with_quadrature.side_effect = lambda **overrides: _grid(overrides["base_cells_per_axis"])
    return surface


def test_names_are_unique():
    names = [item.name for item in corpus.CORPUS]
    assert len(names) == len(set(names))


def test_select_by_name_and_tag():
    assert [item.name for item in corpus.select(["weight_identity_S"])] == ["weight_identity_S"]
    identities = corpus.select(["identity"])
    assert identities and all("identity" in item.tags for item in identities)
    assert len(corpus.select()) == len(corpus.CORPUS)


def test_select_rejects_unknown_names():
    with pytest.raises(ConfigError, match="bogus"):
        corpus.select(["weight_identity_H", "bogus"])


def test_torus_threshold_comes_from_the_fixture():
    assert corpus.torus_threshold() == 0.01


def test_square_checks():
    assert corpus.square_at_least(0.01)(_report(square=0.5)) is None
    assert "not above" in corpus.square_at_least(0.01)(_report(square=0.0))
    assert corpus.square_at_most(1e-8)(_report(square_rho=1e-10)) is None
    assert "exceeds" in corpus.square_at_most(1e-8)(_report(square=1e-3))


def test_claim_and_margin_checks():
    assert corpus.claim_holds(_report(claim_excess_max=-0.1)) is None
    assert corpus.claim_holds(_report(claim_excess_max=10 * functionals.CLAIM_SLACK + 1e-6)) is not None
    assert corpus.strictly_positive_margin(_report("inequality", 1.0, 1.0 + 4 * math.pi)) is None
    assert corpus.strictly_positive_margin(_report("inequality", 1.0, 1.0)) is not None


def test_family_and_curvature_checks():
    assert corpus.families_agree(_report(ratio_disagreement=0.001)) is None
    assert corpus.families_agree(_report(ratio_disagreement=0.05)) is not None
    assert corpus.mean_curvature_positive(_report(min_mean_curvature=2.6)) is None
    assert corpus.mean_curvature_positive(_report(min_mean_curvature=-0.1)) is not None


def test_weight_identity_evaluators():
    for K in (-1, 1):
        report = corpus.weight_identity(K)(None, None)
        assert report.passed
        assert report.terms["max_residual"] < 1e-13


def test_tail_rate_check():
    assert corpus.tail_rate_close(_report(tail_decay_rate=-1.06)) is None
    assert "not within" in corpus.tail_rate_close(_report(tail_decay_rate=-1.3))
    assert corpus.tail_rate_close(_report(tail_decay_rate=float("nan"))) is not None
    combined = corpus.all_checks(corpus.square_at_most(1e-8), corpus.tail_rate_close)
    assert combined(_report(square=0.0, tail_decay_rate=-1.0)) is None
    assert "exceeds" in combined(_report(square=1e-3, tail_decay_rate=-1.3))


def test_observed_order_evaluator():
    def sixth_order(surface, o):
        cells = surface.quadrature.base_cells_per_axis
        return _report(lhs=1.0 + cells**-6.0, rhs=1.0)

    surface = _grid(16)

    report = corpus.observed_order(sixth_order)(surface, None)
    assert report.passed
    assert report.terms["observed_order"] == pytest.approx(6.0, rel=1e-6)

    report = corpus.observed_order(lambda s, o: _report(lhs=1.0 + 1e-3 / s.quadrature.base_cells_per_axis))(surface, None)
    assert not report.passed

    report = corpus.observed_order(lambda s, o: _report(lhs=1.0, rhs=1.0))(surface, None)
    assert report.passed
    assert math.isnan(report.terms["observed_order"])


def test_crude_order_item_is_in_the_identity_tag():
    assert "crude_order_H3_sphere" in [item.name for item in corpus.select(["identity"])]
