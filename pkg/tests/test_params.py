import pytest

from endolab.params import MapParams, ParamError


def test_defaults_are_consistent():
    p = MapParams()
    assert p.b == pytest.approx(0.4 / 32)
    assert p.beta == pytest.approx(min(0.01 / 8, p.b / 10))
    assert p.y0 == pytest.approx(0.25 + 0.004 / 8)
    assert p.a0 == 1.0


@pytest.mark.parametrize(
    "kw, name",
    [
        ({"delta": 0.03}, "delta < 2*theta"),
        ({"theta": 0.02, "delta": 0.01}, "2*theta < r"),
        ({"b": 0.02}, "2*b < r"),
        ({"beta": 0.002}, "8*beta < b"),
        ({"rho": 1e-4}, "eta < rho"),
        ({"epsilon": 0.0}, "epsilon > 0"),
    ],
)
def test_invariant_violations_are_named(kw, name):
    with pytest.raises(ParamError) as exc:
        MapParams(**kw)
    assert exc.value.invariant == name
    assert name in str(exc.value)


def test_with_revalidates():
    with pytest.raises(ParamError):
        MapParams().with_(delta=1.0)
