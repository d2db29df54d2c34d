import textwrap

import pytest

from diffrestore.config import SCHEMA_VERSION, ConfigError, load_config, parse_config
from diffrestore.dynamics import LangevinConfig, MALAConfig, MetropolisConfig

BASE = """
schema = 1
seed = 3

[target]
kind = "mixture"
weights = [0.5, 0.5]
means = [[0.25, 0.25], [0.75, 0.75]]
stddevs = [0.1, 0.1]
"""


def cfg(extra=""):
    return parse_config(textwrap.dedent(BASE) + textwrap.dedent(extra), "test.toml")


def test_minimal_render_config():
    c = cfg("""
    [method]
    name = "diffusion-restore"
    budget = 1000
    """)
    assert c.seed == 3 and c.schema == SCHEMA_VERSION and c.threads == 1
    dyn = c.method.dynamics()
    assert isinstance(dyn, LangevinConfig)
    assert dyn.stddev == 5e-3 and dyn.c_tilde == 5e-3 ** 2 and dyn.dt == 1e-5
    rc = c.method.restore_config()
    assert rc.m == 64 and rc.holding == "embedded" and rc.dt == 1e-5
    assert c.target.build().pixel_count == 32 * 32


@pytest.mark.parametrize("name,kind,large,holding", [
    ("metropolis", MetropolisConfig, 0.3, None),
    ("mala", MALAConfig, 0.3, None),
    ("metropolis-restore", MetropolisConfig, 0.0, "unit"),
    ("mala-restore", MALAConfig, 0.0, "unit"),
])
def test_method_defaults(name, kind, large, holding):
    c = cfg(f"""
    [method]
    name = "{name}"
    budget = 10
    """)
    dyn = c.method.dynamics()
    assert isinstance(dyn, kind) and dyn.large_step_prob == large
    if holding:
        assert c.method.restore_config().holding == holding


def test_unknown_key_is_rejected_with_line():
    with pytest.raises(ConfigError, match=r"test.toml:\d+: method.stdev: unknown key"):
        cfg("""
        [method]
        name = "mala"
        budget = 10
        stdev = 0.1
        """)


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("schema = 1\nbogus = 2\n[target]\nkind = 'uniform'\n", "x.toml")


def test_key_that_does_not_apply_to_the_method_is_rejected():
    with pytest.raises(ConfigError, match="method.c_tilde: unknown key"):
        cfg("""
        [method]
        name = "mala-restore"
        budget = 10
        c_tilde = 0.1
        """)


@pytest.mark.parametrize("body,field", [
    ("name = 'diffusion-restore'\nbudget = 10\ndt = 0.0", "method.dt"),
    ("name = 'diffusion-restore'\nbudget = 10\nm = 0.5", "method.m"),
    ("name = 'mala'\nbudget = 10\nlarge_step_prob = 1.5", "method.large_step_prob"),
    ("name = 'mala'\nbudget = -1", "method.budget"),
    ("name = 'mala'\nbudget = 'many'", "method.budget"),
    ("name = 'nuts'\nbudget = 10", "method.name"),
    ("name = 'mala'", "method.budget"),
])
def test_range_and_type_errors_name_the_field(body, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        cfg("[method]\n" + body + "\n")


def test_schema_mismatch_is_an_error():
    with pytest.raises(ConfigError, match="schema"):
        parse_config("schema = 2\n[target]\nkind = 'uniform'\n")
    with pytest.raises(ConfigError, match="schema: required"):
        parse_config("[target]\nkind = 'uniform'\n")


def test_syntax_error():
    with pytest.raises(ConfigError, match="syntax error"):
        parse_config("schema = = 1")


def test_mixture_shape_errors():
    with pytest.raises(ConfigError, match="target.means"):
        parse_config("schema = 1\n[target]\nkind='mixture'\nweights=[1.0]\nmeans=[[0.5,0.5],[0.1,0.1]]\n"
                     "stddevs=[0.1]\n")


def test_bench_section():
    c = cfg("""
    [bench]
    budgets = [100, 200]
    seeds = [1, 2]
    [[bench.methods]]
    name = "pt"
    [[bench.methods]]
    name = "mala-restore"
    m = 4
    """)
    assert [m.name for m in c.bench.methods] == ["pt", "mala-restore"]
    assert c.bench.methods[1].m == 4 and c.bench.reference == "auto"


def test_bench_errors_point_into_method_tables():
    with pytest.raises(ConfigError, match=r"test.toml:\d+: bench.methods\[1\].m: must be"):
        cfg("""
        [bench]
        budgets = [100]
        seeds = [1]
        [[bench.methods]]
        name = "pt"
        [[bench.methods]]
        name = "mala-restore"
        m = 0
        """)
    with pytest.raises(ConfigError, match="ascending"):
        cfg("[bench]\nbudgets = [200, 100]\nseeds = [1]\n[[bench.methods]]\nname='pt'\n[[bench.methods]]\nname='mala'\n")
    with pytest.raises(ConfigError, match="at least two"):
        cfg("[bench]\nbudgets = [100]\nseeds = [1]\n[[bench.methods]]\nname='pt'\n")


def test_bias_section_requires_sweep():
    with pytest.raises(ConfigError, match="bias.dts: required field is missing"):
        cfg("[bias]\nsigma = 0.1\n")
    c = cfg("[bias]\ndts = [1e-4, 1e-2, 1e-3]\n")
    assert c.bias.dts == (1e-2, 1e-3, 1e-4)


def test_scene_target():
    c = parse_config("schema = 1\n[target]\nkind = 'scene'\npreset = 'furnace'\nalbedo = 0.25\ndepth = 3\n")
    scene = c.target.build()
    assert scene.dim == 8
    with pytest.raises(ConfigError, match="target.preset"):
        parse_config("schema = 1\n[target]\nkind = 'scene'\npreset = 'kitchen'\n")


def test_require_missing_section():
    with pytest.raises(ConfigError, match=r"\[method\]"):
        cfg().require("method")


def test_load_config_io_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.toml")
