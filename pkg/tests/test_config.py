import pytest

from edrsim.config import (
    ConfigError, build_config, dump_config, load_config, parse_config_text, parse_override,
)
from edrsim.orchestrator import Strategy

TEXT = """
[topology]
num_edrs = 5
cores = 2

[workload]
profile = Alexa
rate = 400
similarity_threshold = 0.7

[strategy]
name = cpu_usage
epoch_ticks = 100
"""


def test_parse_and_derived_views():
    cfg = parse_config_text(TEXT)
    assert cfg.topology.num_edrs == 5 and cfg.topology.cores == 2
    assert cfg.strategy.name is Strategy.CPU_USAGE
    assert cfg.lsh_ms == 0.1
    assert cfg.workload_spec().bucket_rating == 0.818
    assert cfg.run_id == "Alexa-400-CPU_USAGE-s1"
    assert cfg.epoch_config().epoch_ticks == 100


def test_defaults():
    cfg = build_config({})
    assert cfg.topology.num_edrs == 15 and cfg.topology.inter_edr_delay_ms == 2.0
    assert cfg.rate == 2000.0
    assert cfg.strategy.epoch_ticks == 500 and cfg.strategy.trigger_threshold == 0.75


def test_overrides_apply_after_file_and_roundtrip():
    cfg = parse_config_text(TEXT, [parse_override("strategy=CPU_REUSE"), parse_override("workload.rate=800")])
    assert cfg.strategy.name is Strategy.CPU_REUSE and cfg.rate == 800.0
    again = parse_config_text(dump_config(cfg))
    assert again == cfg
    assert cfg.with_overrides(workload={"reuse": False}).run_id.endswith("-noreuse-s1")


@pytest.mark.parametrize("text,msg", [
    ("[workload]\nbogus = 1\n", "unknown key"),
    ("[nosuch]\na = 1\n", "unknown section"),
    ("[workload]\nrate = fast\n", "rate"),
    ("[workload]\nprofile = ImageNet\n", "profile"),
    ("[workload]\nsimilarity_threshold = 0.65\n", "calibration"),
    ("[strategy]\nname = RANDOM\n", "name"),
    ("[topology]\nnum_edrs = 0\n", "topology"),
    ("[lsh]\nhyperplanes_per_table = 40\n", "lsh"),
    ("[workload]\nwarmup_s = 100\n", "warmup"),
    ("[workload]\nreuse = maybe\n", "boolean"),
    ("[workload]\nrate = 1\nrate = 2\n", "rate"),
    ("not an ini", "line: 1"),
])
def test_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config_text(text)


def test_conflicting_duplicate_overrides():
    with pytest.raises(ConfigError, match="conflicting"):
        build_config({}, [("workload.rate", "100"), ("workload.rate", "200")])
    build_config({}, [("workload.rate", "100"), ("workload.rate", "100")])


def test_override_key_resolution():
    assert parse_override("rate=5") == ("workload.rate", "5")
    assert parse_override("strategy = NONE") == ("strategy.name", "NONE")
    with pytest.raises(ConfigError):
        parse_override("seed=3")  # workload.seed and lsh.seed
    with pytest.raises(ConfigError):
        parse_override("rate")


def test_missing_file_named(tmp_path):
    missing = tmp_path / "nope.cfg"
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_config(missing)


def test_missing_trace_file(tmp_path):
    with pytest.raises(ConfigError, match="trace"):
        build_config({"workload": {"trace": str(tmp_path / "x.trace")}})
