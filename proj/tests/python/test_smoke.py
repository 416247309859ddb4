import json
import math

import numpy as np
import pytest

import ionlock


def test_presets_and_linewidth_anchors():
    assert set(ionlock.presets()) == {"pump_free", "sbs_free", "sbs_coil", "pump_coil"}
    lw = ionlock.linewidths("sbs_coil", 500, 30e6)
    assert lw["ilw_one_over_pi_hz"] == pytest.approx(580, rel=0.15)
    assert ionlock.linewidths("sbs_free", 500, 30e6)["flw_hz"] == pytest.approx(12, rel=0.1)


def test_psd_accepts_json_models():
    model = {"h": {"0": 50.0}}
    assert ionlock.evaluate_psd(json.dumps(model), [1.0, 1e3, 1e6]) == pytest.approx([50.0] * 3)
    assert json.loads(ionlock.preset_json("pump_coil"))["id"] == "pump_coil"


def test_white_trace_adev():
    h0, rate, carrier = 200.0, 1e3, 4.447e14
    y = ionlock.synthesize_trace(json.dumps({"h": {"0": h0}}), 100.0, rate, 3)
    assert isinstance(y, np.ndarray) and y.size == 100_000
    a = ionlock.allan_deviation(y.tolist(), rate, carrier, [0.01, 0.1])
    for tau, s in zip(a["taus"], a["sigma_y"]):
        assert s == pytest.approx(math.sqrt(h0 / (2 * tau)) / carrier, rel=0.15)


def test_same_seed_same_trace():
    a = ionlock.synthesize_trace("sbs_coil", 0.01, 1e6, 9)
    b = ionlock.synthesize_trace("sbs_coil", 0.01, 1e6, 9)
    assert np.array_equal(a, b)


def test_rabi_and_zeeman():
    assert ionlock.rabi_probability(25e3, 0.0, 20e-6) == pytest.approx(1.0)
    rows = {(r["two_ms"], r["two_md"], r["sideband"]): r["detuning_hz"] for r in ionlock.zeeman_table(5.9)}
    assert abs(rows[(1, -3, 0)] + 6.67e6) < 0.4e6
    assert abs(rows[(-1, -3, 0)] - 10e6) < 0.4e6


def test_line_fit():
    x = np.linspace(-20e3, 20e3, 41)
    sigma = 6e3 / (2 * math.sqrt(2 * math.log(2)))
    p = 0.9 * np.exp(-0.5 * (x / sigma) ** 2)
    f = ionlock.fit_lineshape(x.tolist(), p.tolist())
    assert f["fwhm_hz"] == pytest.approx(6e3, rel=1e-6)
    assert abs(f["center_hz"]) < 1e-3


def test_config_errors():
    with pytest.raises(ionlock.ConfigError, match="seed"):
        ionlock.run("spam", "{}")
    with pytest.raises(ionlock.ConfigError, match="unknown key"):
        ionlock.run("spam", '{"seed": 1, "bogus": 2}')
    with pytest.raises(ValueError):
        ionlock.normalize_config('{"seed": 1,')


def test_run_spam_and_reproduce():
    out = ionlock.run("spam", '{"seed": 2, "spam": {"shots": 200}}')
    assert out["tables"]
    assert float(out["summary"]["fidelity"]) >= 0.95
    z = ionlock.reproduce("fig5d")
    assert not z["check_failed"]
    assert "zeeman.csv" in z["tables"]
    assert json.loads(ionlock.default_config())["seed"] == 0
