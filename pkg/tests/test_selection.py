import math

import numpy as np
import pytest

from ipgmm.selection import Context, as_family, bic, df, sweep, sweep_json, sweep_table
from ipgmm.spectral import IntermediateFamily


def test_bic_examples():
    assert abs(bic(-192.177, 35, 150) - (-559.73)) < 0.01
    assert abs(bic(-185.538, 38, 150) - (-561.48)) < 0.01
    assert bic(-10.0, 0, 50) == -20.0
    with pytest.raises(ValueError):
        bic(0.0, -1, 10)


def test_bic_decreasing_in_p():
    for N in (3, 10, 1000):
        vals = [bic(-50.0, p, N) for p in range(20)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_df_examples():
    assert df(IntermediateFamily("prop", 2), 3, 4, Context.CLUSTERING) == 35
    assert df(IntermediateFamily("cpc", 2), 3, 4, "clustering") == 38
    assert df(IntermediateFamily("prop", 2), 4, 5, Context.DISCRIMINANT) == 52
    assert df(IntermediateFamily("cpc", 2), 4, 5, Context.DISCRIMINANT) == 60


def test_df_full_grouping_is_vvv():
    for k in range(1, 9):
        for d in range(2, 11):
            assert df(IntermediateFamily("cpc", k), k, d) == df("VVV", k, d)


def test_as_family():
    assert as_family("VVV", 4) == IntermediateFamily("cpc", 4)
    assert as_family("vee", 4) == IntermediateFamily("prop", 1)
    assert as_family(("cpc", 2), 4) == IntermediateFamily("cpc", 2)
    with pytest.raises(ValueError):
        as_family("EII", 3)


def test_sweep_order_and_failures(iris):
    X = iris.X
    cands = [("prop", 2), ("cpc", 2), "EII", ("cpc", 5)]
    opts = dict(nstart1=2, nstart2=2, seed=3)
    a = sweep(X, 3, cands, **opts)
    b = sweep(X, 3, cands[::-1], **opts)
    assert [r.candidate for r in a] == [r.candidate for r in b]
    assert [r.bic for r in a] == [r.bic for r in b]
    assert a[-1].error is not None and a[-2].error is not None
    ok = [r for r in a if r.error is None]
    assert all(x.bic >= y.bic for x, y in zip(ok, ok[1:]))
    assert "failed" in sweep_table(a)
    assert '"candidate"' in sweep_json(a)


def test_sweep_single_and_discriminant(crabs):
    rows = sweep(crabs.X, 4, [("prop", 2)], context="discriminant", labels=crabs.labels, nstart1=4, seed=0)
    assert len(rows) == 1 and rows[0].df == 52
    with pytest.raises(ValueError):
        sweep(crabs.X, 4, [], context="discriminant", labels=crabs.labels)
