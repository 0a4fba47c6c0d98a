import math

import pytest

from chemflux.config import ConfigError, load_config, loads, preset_names, preset_text
from chemflux.sensitivity import RotationalSensitivity, ScalarSensitivity

BASE = """
grid.dim = 2
grid.extents = 1, 1
grid.cells = 16x16
sensitivity.kind = scalar
"""


def test_presets_listed_and_parse():
    names = preset_names()
    for expected in ("2d-ns-small-c0", "fluid-free", "stokes-free-decay", "3d-stokes-smoke", "gravity-uniform", "zero", "large-c0"):
        assert expected in names
    for name in names:
        load_config(name)


def test_main_preset_values():
    cfg = load_config("2d-ns-small-c0")
    assert cfg.grid.dim == 2 and cfg.grid.cells == (64, 64)
    assert cfg.fluid.kappa == 1 and cfg.fluid_enabled
    assert isinstance(cfg.sensitivity, RotationalSensitivity)
    assert cfg.sensitivity.theta == pytest.approx(math.pi / 4, rel=1e-15)
    assert cfg.threshold.delta0 == pytest.approx(math.sqrt(97 / 55296), abs=1e-12)
    assert cfg.initial.c_max == pytest.approx(0.5 * cfg.threshold.delta0, rel=1e-15)
    assert cfg.enforce_smallness


def test_preset_inheritance_and_overrides():
    cfg = load_config("fluid-free")
    assert not cfg.fluid_enabled and cfg.grid.cells == (64, 64)
    cfg = load_config("fluid-free", grid__cells="32x32", run__t_end="0.5")
    assert cfg.grid.cells == (32, 32) and cfg.t_end == 0.5


def test_file_and_comments(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(BASE + "# comment\nsensitivity.chi = 2.5   # trailing\n")
    cfg = load_config(p)
    assert isinstance(cfg.sensitivity, ScalarSensitivity) and cfg.sensitivity.chi == 2.5
    assert "sensitivity.chi = 2.5" in cfg.to_text()
    assert loads(cfg.to_text()) == cfg


@pytest.mark.parametrize(
    "extra,needle",
    [
        ("bogus.key = 1\n", "unknown key"),
        ("grid.cells = 16\n", "grid"),
        ("fluid.kappa = 2\n", "kappa"),
        ("scheme.cfl = 0.9\n", "cfl"),
        ("threshold.h = 0.03\n", "1/48"),
        ("initial.n_mean = -1\n", "non-negative"),
        ("initial.c_max = -0.1\n", "non-negative"),
        ("sensitivity.kind = weird\n", "sensitivity.kind"),
        ("regularizer.epsilon = 0.7\n", "epsilon"),
        ("novalue\n", "expected"),
    ],
)
def test_validation_errors(extra, needle):
    with pytest.raises(ConfigError, match=needle):
        loads(BASE + extra)


def test_missing_required():
    with pytest.raises(ConfigError, match="missing required key sensitivity.kind"):
        loads("grid.dim = 2\ngrid.extents = 1,1\ngrid.cells = 8,8\n")


def test_three_dimensional_navier_stokes_rejected():
    text = "grid.dim = 3\ngrid.extents = 1,1,1\ngrid.cells = 8,8,8\nsensitivity.kind = scalar\nfluid.kappa = 1\n"
    with pytest.raises(ConfigError, match="two dimensions"):
        loads(text)
    assert loads(text.replace("kappa = 1", "kappa = 0")).fluid.kappa == 0


def test_smallness_enforced():
    with pytest.raises(ConfigError, match="smallness threshold"):
        loads(BASE + "threshold.enforce_smallness = true\ninitial.c_fraction = 1.5\n")
    cfg = loads(BASE + "threshold.enforce_smallness = false\ninitial.c_fraction = 1.5\n")
    assert cfg.initial.c_max > cfg.threshold.delta0


def test_pi_and_fraction_values():
    cfg = loads(BASE + "sensitivity.kind = rotational\nsensitivity.theta = -pi/2\nthreshold.h = 1/96\n")
    assert cfg.sensitivity.theta == -math.pi / 2
    assert cfg.threshold.h == 1 / 96
    cfg = loads(BASE + "sensitivity.kind = rotational\nsensitivity.theta = 0.25*pi\n")
    assert cfg.sensitivity.theta == math.pi / 4


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        loads("run.preset = nope\n")
    with pytest.raises(ConfigError):
        load_config("definitely-not-a-file-or-preset")
    assert "grid.dim" in preset_text("2d-ns-small-c0")
