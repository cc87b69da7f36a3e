import pytest

from asepkpz import convergence
from asepkpz.convergence import ObservableSpec, parse_observable
from asepkpz.params import ParameterError
from asepkpz.rng import RandomStream


def test_parse_observable():
    assert parse_observable("var:H", 2.0) == ObservableSpec("var", "H", 2.0)
    assert parse_observable("mean:V@0.5", 1.0).name == "mean:V@0.5"
    for bad in ("H", "median:H", "var:Z", "var:H@3"):
        with pytest.raises(ParameterError):
            parse_observable(bad, 1.0)


def test_single_epsilon_has_no_extrapolation():
    tab = convergence.convergence_study(1.0, 1.0, 1.0, [0.4], N=300, M=32, rng=RandomStream(1))
    assert tab.extrapolated == {} and tab.z_score("var:H@1") is None
    kinds = {r["kind"] for r in tab.rows()}
    assert kinds == {"discrete", "continuum"}


def test_var_v_tracks_half_length():
    # V_eps is a rescaled fair walk on the flat steps; its variance is close to L/2
    tab = convergence.convergence_study(1.0, 1.0, 1.0, [0.2], ["var:V"], N=20_000, M=64, rng=RandomStream(2))
    est = tab.discrete[("var:V@1", 0.2)]
    assert abs(est.estimate - 0.5) < 0.05
    cont = tab.continuum["var:V@1"]
    assert abs(cont.estimate - 0.5) < 4 * cont.stderr


def test_inadmissible_epsilon():
    with pytest.raises(ParameterError):
        convergence.convergence_study(1.0, 1.0, 1.0, [3.0], N=10, M=8)
    with pytest.raises(ParameterError):
        convergence.convergence_study(1.0, 1.0, 1.0, [], N=10, M=8)
