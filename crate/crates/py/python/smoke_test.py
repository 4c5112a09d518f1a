"""Smoke test for the hecke_lab extension: build with `maturin develop` first."""

import cmath
import json

import hecke_lab


def test_jet_log_exp_round_trip():
    a = [2 + 1j, 0.3 - 0.2j, -0.1 + 0.4j]
    back = hecke_lab.jet_exp(hecke_lab.jet_log(a))
    assert max(abs(x - y) for x, y in zip(a, back)) < 1e-12


def test_jet_log_is_multiplicative():
    a = [1.5 - 0.5j, 0.2j, 0.7]
    b = [0.8 + 0.3j, -0.4, 0.1 + 0.1j]
    la, lb = hecke_lab.jet_log(a), hecke_lab.jet_log(b)
    lab = hecke_lab.jet_log(hecke_lab.jet_mul(a, b))
    assert abs(cmath.exp(lab[0] - la[0] - lb[0]) - 1) < 1e-12
    assert max(abs(lab[k] - la[k] - lb[k]) for k in (1, 2)) < 1e-12


def test_sigma_is_an_involution():
    x, s = 0.3 + 0.7j, 2 - 1j
    assert abs(hecke_lab.sigma(hecke_lab.sigma(s, x), x) - s) < 1e-12


def test_jets_suite_passes():
    assert hecke_lab.suite("jets") == [1]
    rep = json.loads(hecke_lab.run(1))
    assert rep["gates"] and all(g["pass"] for g in rep["gates"])


def test_bad_config_is_value_error():
    try:
        hecke_lab.run(1, '{"x": [0.0, 0.0]}')
    except ValueError:
        return
    raise AssertionError("x = 0 accepted")


if __name__ == "__main__":
    for name, f in list(globals().items()):
        if name.startswith("test_"):
            f()
            print("ok", name)
