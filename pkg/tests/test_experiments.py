import numpy as np
import pytest

from hohomog import experiments
from hohomog.errors import ValidationError


def test_eps_list_checks():
    assert experiments.check_eps_list([0.125, 0.0625]) == [0.125, 0.0625]
    for bad in ([], [0.3], [1 / 16, 1 / 8], [1 / 8, 1 / 8]):
        with pytest.raises(ValidationError):
            experiments.check_eps_list(bad)


def test_pmap_preserves_order():
    items = list(range(20))
    assert experiments.pmap(lambda v: v * v, items, jobs=4) == [v * v for v in items]


def test_certificate_coerces_bool():
    c = experiments.Certificate("id", "kind", np.bool_(True), {"x": 1})
    assert c.ok is True and c.as_dict()["ok"] is True


def test_constant_excess_rows_pass():
    for m in (1, 2):
        rows = experiments.constant_excess(m)
        assert rows and all(r["pass"] for r in rows)
        ratios = {r["r"]: r["H_delta_r"] / r["H_r"] for r in rows}
        assert max(ratios.values()) < 0.2
        # the leading monomial gives exactly delta once the inner ball is well resolved
        assert all(v == pytest.approx(1 / 8, rel=0.01) for r, v in ratios.items() if r >= 1 / 16)
